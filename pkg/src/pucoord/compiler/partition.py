"""Pipeline partitioning: contiguous node slices onto a pool of PUs.

The node list (topological order) is cut into contiguous slices; each
slice becomes one pipeline stage running on a single PU of either type.
The chosen partition minimises, lexicographically:

1. makespan — the largest stage round time,
2. the number of occupied PUs,
3. the interleaved (slice_end, pu_type) sequence, compared
   stage-by-stage with "1x" ordering before "2x".

Unused PUs are allowed (a slice is never empty).  The dynamic program
runs over (first uncovered node, 1x PUs left, 2x PUs left) suffix
states; reconstruction scans cut points in ascending order so the
recovered solution realises tie-break rule 3 exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

from .profile import slice_cycles

_TYPES = ("1x", "2x")


class PartitionError(Exception):
    pass


@dataclass
class Stage:
    nodes: list
    pu_type: str
    pid: int = -1
    cycles: int = 0


@dataclass
class Partition:
    stages: list
    makespan: int
    pool: tuple                   # (a, b) made available

    @property
    def occupied(self) -> int:
        return len(self.stages)

    def balance_efficiency(self) -> float:
        """Mean occupied-stage time over the largest stage time."""
        if not self.stages:
            return 0.0
        times = [s.cycles for s in self.stages]
        return sum(times) / len(times) / max(times)


def partition_nodes(node_ids, profiles, a: int, b: int) -> Partition:
    """Optimal contiguous partition of ``node_ids`` over ``a`` 1x + ``b`` 2x PUs."""
    n = len(node_ids)
    if n == 0:
        raise PartitionError("no nodes to partition")
    if a < 0 or b < 0 or a + b == 0:
        raise PartitionError(f"invalid pool ({a}, {b})")

    cost_cache = {}

    def cost(i, j, t):
        key = (i, j, t)
        if key not in cost_cache:
            cost_cache[key] = slice_cycles(profiles, node_ids[i:j], t)
        return cost_cache[key]

    INF = float("inf")

    def options(ra, rb):
        for t in _TYPES:
            if (t == "1x" and ra > 0) or (t == "2x" and rb > 0):
                yield t

    # phase 1: minimal achievable makespan
    @lru_cache(maxsize=None)
    def span(i, ra, rb):
        if i == n:
            return 0
        out = INF
        for j in range(i + 1, n + 1):
            for t in options(ra, rb):
                tail = span(j, ra - (t == "1x"), rb - (t == "2x"))
                out = min(out, max(cost(i, j, t), tail))
        return out

    m_star = span(0, a, b)
    if m_star == INF:
        raise PartitionError(f"cannot cover {n} nodes with pool ({a}, {b})")

    # phase 2: fewest stages among solutions whose slices all fit m_star
    @lru_cache(maxsize=None)
    def count(i, ra, rb):
        if i == n:
            return 0
        out = INF
        for j in range(i + 1, n + 1):
            for t in options(ra, rb):
                if cost(i, j, t) > m_star:
                    continue
                out = min(out, 1 + count(j, ra - (t == "1x"), rb - (t == "2x")))
        return out

    c_star = count(0, a, b)

    # phase 3: earliest cut, then "1x" before "2x", at every step
    stages = []
    i, ra, rb = 0, a, b
    while i < n:
        need = count(i, ra, rb)
        found = False
        for j in range(i + 1, n + 1):
            for t in _TYPES:
                if (t == "1x" and ra == 0) or (t == "2x" and rb == 0):
                    continue
                if cost(i, j, t) > m_star:
                    continue
                ra2, rb2 = ra - (t == "1x"), rb - (t == "2x")
                if 1 + count(j, ra2, rb2) == need:
                    stages.append(Stage(nodes=list(node_ids[i:j]), pu_type=t,
                                        cycles=cost(i, j, t)))
                    i, ra, rb = j, ra2, rb2
                    found = True
                    break
            if found:
                break
        assert found, "reconstruction must follow the DP"

    assert len(stages) == c_star
    assert max(s.cycles for s in stages) == m_star
    return Partition(stages=stages, makespan=m_star, pool=(a, b))


def assign_pids(partition: Partition, system) -> None:
    """Bind stages to concrete PUs: ascending pid within each type."""
    free = {
        t: sorted(p.pid for p in system.pus if p.pu_type == t)
        for t in _TYPES
    }
    for stage in partition.stages:
        pool = free[stage.pu_type]
        if not pool:
            raise PartitionError(
                f"not enough {stage.pu_type} PUs in the system")
        stage.pid = pool.pop(0)


def brute_force_partition(node_ids, profiles, a: int, b: int) -> Partition:
    """Exhaustive reference with the identical objective and tie-breaks.

    Exponential; only usable for small node counts in tests.
    """
    n = len(node_ids)
    best_key = None
    best_sol = None

    def rec(i, ra, rb, acc):
        nonlocal best_key, best_sol
        if i == n:
            makespan = max(c for _, _, c in acc)
            key = (makespan, len(acc),
                   tuple((j, t) for j, t, _ in acc))
            if best_key is None or key < best_key:
                best_key = key
                best_sol = list(acc)
            return
        for j in range(i + 1, n + 1):
            for t in _TYPES:
                if (t == "1x" and ra == 0) or (t == "2x" and rb == 0):
                    continue
                c = slice_cycles(profiles, node_ids[i:j], t)
                acc.append((j, t, c))
                rec(j, ra - (t == "1x"), rb - (t == "2x"), acc)
                acc.pop()

    rec(0, a, b, [])
    if best_sol is None:
        raise PartitionError(f"cannot cover {n} nodes with pool ({a}, {b})")
    stages = []
    prev = 0
    for j, t, c in best_sol:
        stages.append(Stage(nodes=list(node_ids[prev:j]), pu_type=t, cycles=c))
        prev = j
    return Partition(stages=stages, makespan=best_key[0], pool=(a, b))
