"""Memory hazard detection over the simulated HBM access trace.

A hazard is any pair of accesses whose byte ranges overlap, whose time
intervals overlap, and where at least one side is a write.  A correctly
synchronized pipeline never exhibits one: REQ/ACK handshakes must keep
every reader strictly after the write that produced its data and every
writer strictly after the reads of the buffer generation it recycles.
"""

from __future__ import annotations

from array import array
from bisect import bisect_right
from dataclasses import dataclass, field

try:
    from .. import _core
except ImportError:          # pure-Python fallback, same sweep
    _core = None

BACKEND = "compiled" if _core is not None else "python"


@dataclass
class Hazard:
    first: object        # Access
    second: object       # Access
    kind: str = "overlap"        # "overlap" or "overwrite"
    tensor: str = field(default="", compare=False)

    def __str__(self):
        a, b = self.first, self.second
        if self.kind == "overwrite":
            return (f"{self.tensor}: write PU{b.pid}/{b.group} "
                    f"[0x{b.addr:X}+{b.length}) @ [{b.t0:g},{b.t1:g}) recycles "
                    f"the slot written @ [{a.t0:g},{a.t1:g}) before every "
                    f"consumer read it")
        return (f"{a.rw.upper()} PU{a.pid}/{a.group} "
                f"[0x{a.addr:X}+{a.length}) @ [{a.t0:g},{a.t1:g}) overlaps "
                f"{b.rw.upper()} PU{b.pid}/{b.group} "
                f"[0x{b.addr:X}+{b.length}) @ [{b.t0:g},{b.t1:g})")


def _pairs_py(t0, t1, addr, nbytes, is_write, limit):
    """Reference sweep over (t0, t1)-sorted parallel arrays."""
    eps = 1e-9
    out = []
    active = []
    for i in range(len(t0)):
        cut = t0[i] + eps
        active = [j for j in active if t1[j] > cut]
        for j in active:
            if not (is_write[i] or is_write[j]):
                continue
            if addr[i] < addr[j] + nbytes[j] and addr[j] < addr[i] + nbytes[i]:
                out.append((j, i))
                if len(out) >= limit:
                    return out
        active.append(i)
    return out


def find_pairs(t0, t1, addr, nbytes, is_write, limit, backend=None):
    """Conflicting index pairs; ``backend`` forces "python"/"compiled"."""
    backend = backend or BACKEND
    if backend == "compiled":
        if _core is None:
            raise RuntimeError("compiled kernel not available")
        return _core.hazard_pairs(
            array("d", t0), array("d", t1), array("q", addr),
            array("q", nbytes), array("B", is_write), limit)
    return _pairs_py(t0, t1, addr, nbytes, is_write, limit)


def protocol_hazards(accesses, tensors, limit=100):
    """Per-slot handshake violations in ring-buffered tensors.

    The producer fills each ring slot once per lap and every consumer
    reads each fill exactly once, so within one slot the k-th read of a
    consumer must start after the k-th write finishes (else it observes
    unwritten data) and finish before the (k+1)-th write begins (else the
    producer recycles the slot under a live value).  Both are violations
    even when the two transfers never overlap on the wall clock.
    """
    regions = []          # (lo, hi, tensor_id, producer_pid, consumers)
    for tid in sorted(tensors):
        doc = tensors[tid]
        cons = doc.get("consumer_pids") or []
        if not doc.get("synced") or doc.get("producer_pid", -1) < 0 or not cons:
            continue
        base, sb = doc["base_addr"], doc["slot_bytes"]
        payload = doc.get("payload_bytes", sb)
        for s in range(doc["slots"]):
            lo = base + s * sb
            regions.append((lo, lo + payload, tid,
                            doc["producer_pid"], frozenset(cons)))
    regions.sort()
    starts = [r[0] for r in regions]

    writes = {}           # region index -> [access]
    reads = {}            # (region index, consumer pid) -> [access]
    for a in sorted(accesses, key=lambda a: (a.t0, a.t1)):
        i = bisect_right(starts, a.addr) - 1
        if i < 0 or a.addr >= regions[i][1]:
            continue
        _, _, tid, prod, cons = regions[i]
        if a.rw == "w" and a.pid == prod:
            writes.setdefault(i, []).append(a)
        elif a.rw == "r" and a.pid in cons:
            reads.setdefault(i, []).append(a)

    out = []
    for i in sorted(writes.keys() | reads.keys()):
        _, _, tid, prod, cons = regions[i]
        wlist = writes.get(i, [])
        rlist = reads.get(i, [])
        per_pid = {}
        for r in rlist:
            per_pid.setdefault(r.pid, []).append(r)
        for pid in sorted(per_pid):
            for k, r in enumerate(per_pid[pid]):
                if k >= len(wlist) or r.t0 < wlist[k].t1:
                    # reads ahead of the write that should feed it
                    w = wlist[min(k, len(wlist) - 1)] if wlist else r
                    out.append(Hazard(w, r, kind="overwrite", tensor=tid))
                elif k + 1 < len(wlist) and wlist[k + 1].t0 < r.t1:
                    out.append(Hazard(r, wlist[k + 1],
                                      kind="overwrite", tensor=tid))
                else:
                    continue
                if len(out) >= limit:
                    return out
    return out


def detect_hazards(accesses, limit=100, backend=None, tensors=None):
    """Return up to ``limit`` hazards found in an access trace.

    Always reports time-overlapping conflicts; when the plan's tensor map
    is supplied, ring-recycle violations are reported as well.
    """
    recs = sorted(
        (a for a in accesses if a.length > 0 and a.t1 >= a.t0),
        key=lambda a: (a.t0, a.t1),
    )
    pairs = find_pairs(
        [a.t0 for a in recs], [a.t1 for a in recs],
        [a.addr for a in recs], [a.length for a in recs],
        [1 if a.rw == "w" else 0 for a in recs], limit, backend)
    found = [Hazard(recs[i], recs[j]) for i, j in pairs]
    if tensors and len(found) < limit:
        found.extend(protocol_hazards(recs, tensors, limit - len(found)))
    return found
