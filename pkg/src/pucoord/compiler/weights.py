"""URAM weight residency scheduling for one pipeline stage.

Weights either live permanently in URAM ("offline") or are streamed
from HBM every round ("dynamic").  Dynamic weights move one *tile* at a
time: while a GEMM tile computes, the next tile's weight slice is
prefetched, so the dynamic region only ever holds two consecutive tile
slices — never a whole node.  A dynamic tile stalls its GEMM by its
deficit: the part of its weight-load time not hidden by the preceding
tile's compute window.

URAM is allocated in 64 equal chunks.  Offline weights occupy their
chunk-rounded size forever; feasibility requires

    offline_bytes + max_adjacent_dynamic_tile_pair <= capacity

where the pair maximum runs over the stage's cyclic tile sequence
(including the wrap-around from the last tile of the round back to the
first, and a tile paired with its own next-round copy when it is the
only tile).

Residency is chosen among prefixes of the nodes sorted by decreasing
deficit: the largest feasible prefix goes offline.  Prefix feasibility
at one capacity implies feasibility at any larger capacity, and larger
prefixes drop the largest remaining deficits first, so the stall
estimate is non-increasing in capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

URAM_CHUNKS = 64


class WeightInfeasible(Exception):
    def __init__(self, pid, needed, capacity):
        self.needed = needed
        self.capacity = capacity
        super().__init__(
            f"stage on PU{pid}: weights need {needed} bytes simultaneously "
            f"resident but URAM holds {capacity}"
        )


@dataclass
class WeightPlan:
    pid: int
    capacity: int
    chunk_bytes: int
    offline: list                 # node ids, resident forever
    dynamic: list                 # node ids in stage order, streamed each round
    stall_cycles: int             # per-round estimate over all dynamic tiles
    peak_bytes: int
    deficits: dict = field(default_factory=dict)

    @property
    def occupancy(self) -> float:
        return self.peak_bytes / self.capacity if self.capacity else 0.0


def _chunked(nbytes, chunk):
    return math.ceil(nbytes / chunk) * chunk if nbytes > 0 else 0


def node_weight_bytes(node) -> int:
    return node.weight_bytes + node.bias_bytes


def tile_chunks(node):
    """(offset, nbytes) slices of a node's HBM weight block, one per
    tile, in execution order.  The bias rides with the last tile so
    every slice is contiguous in the ``[weights][bias]`` layout."""
    out = []
    off = 0
    last = len(node.tiles) - 1
    for j, t in enumerate(node.tiles):
        nb = t.weight_bytes + (node.bias_bytes if j == last else 0)
        out.append((off, nb))
        off += t.weight_bytes
    return out


def _slots(nodes, offline_ids):
    """Cyclic (nbytes, is_dynamic) tile sequence for one round."""
    slots = []
    for v in nodes:
        dyn = v.id not in offline_ids
        for _, nb in tile_chunks(v):
            slots.append((nb, dyn))
    return slots


def peak_occupancy(nodes, offline_ids, chunk) -> int:
    """Worst-case URAM bytes for a residency choice over a stage's nodes."""
    offline = sum(_chunked(node_weight_bytes(v), chunk)
                  for v in nodes if v.id in offline_ids)
    slots = _slots(nodes, offline_ids)
    n = len(slots)
    pair = 0
    for i, (nb, dyn) in enumerate(slots):
        if not dyn:
            continue
        if n == 1:
            pair = max(pair, 2 * nb)
        else:
            nb2, dyn2 = slots[(i + 1) % n]
            pair = max(pair, nb + (nb2 if dyn2 else 0))
    return offline + pair


def schedule_weights(nodes, tile_cycles, capacity, hbm_bytes_per_cycle,
                     pid=-1) -> WeightPlan:
    """Pick offline/dynamic residency for a stage's nodes.

    ``nodes`` are the stage's DagNodes in execution order; ``tile_cycles``
    maps node id to its per-tile GEMM cycles on this PU (each tile's
    compute window hides the prefetch of the following tile).
    """
    chunk = capacity // URAM_CHUNKS
    k = len(nodes)

    # flat cyclic tile sequence with per-slot load and compute times
    slot_node, slot_load, slot_gemm = [], [], []
    for v in nodes:
        cyc = tile_cycles[v.id]
        for j, (_, nb) in enumerate(tile_chunks(v)):
            slot_node.append(v.id)
            slot_load.append(math.ceil(nb / hbm_bytes_per_cycle))
            slot_gemm.append(cyc[j])
    n = len(slot_node)

    deficits = {v.id: 0 for v in nodes}
    for s in range(n):
        window = slot_gemm[(s - 1) % n]
        deficits[slot_node[s]] += max(0, slot_load[s] - window)

    order = sorted(nodes,
                   key=lambda v: (-deficits[v.id], -node_weight_bytes(v), v.id))
    chosen = None
    for size in range(k, -1, -1):
        offline_ids = {v.id for v in order[:size]}
        peak = peak_occupancy(nodes, offline_ids, chunk)
        if peak <= capacity:
            chosen = (offline_ids, peak)
            break
    if chosen is None:
        worst = min(peak_occupancy(nodes, {v.id for v in order[:s]}, chunk)
                    for s in range(k + 1))
        raise WeightInfeasible(pid, worst, capacity)

    offline_ids, peak = chosen
    dynamic = [v.id for v in nodes if v.id not in offline_ids]
    return WeightPlan(
        pid=pid,
        capacity=capacity,
        chunk_bytes=chunk,
        offline=[v.id for v in nodes if v.id in offline_ids],
        dynamic=dynamic,
        stall_cycles=sum(deficits[v] for v in dynamic),
        peak_bytes=peak,
        deficits=deficits,
    )
