"""Per-destination round-robin arbitration over pending control tokens."""

from __future__ import annotations


class RoundRobinArbiter:
    """Picks one ready requester per grant, rotating priority.

    After granting requester ``g``, the next grant scans from ``g + 1``
    upward (cyclically over the requester id space), so persistent
    contenders alternate and no requester starves.
    """

    def __init__(self):
        self._last = None

    def grant(self, ready):
        """Return the chosen id from the non-empty iterable ``ready``."""
        ids = sorted(set(ready))
        if not ids:
            raise ValueError("no ready requesters")
        if self._last is None:
            choice = ids[0]
        else:
            choice = next((i for i in ids if i > self._last), ids[0])
        self._last = choice
        return choice


def arbitrate(arrivals):
    """Serve one token per cycle from a trace of (arrival_cycle, src) pairs.

    Pure reference model of a single destination port: tokens become
    eligible at their arrival cycle, the port delivers at most one token
    per cycle, and ties are broken round-robin by source id.  Returns
    a list of (deliver_cycle, src) in delivery order.
    """
    pending = sorted(arrivals)  # by (arrival, src)
    rr = RoundRobinArbiter()
    out = []
    t = 0
    while pending:
        t = max(t, pending[0][0])
        ready = [src for (at, src) in pending if at <= t]
        if not ready:
            t = pending[0][0]
            continue
        src = rr.grant(ready)
        out.append((t, src))
        for i, (at, s) in enumerate(pending):
            if s == src and at <= t:
                del pending[i]
                break
        t += 1
    return out
