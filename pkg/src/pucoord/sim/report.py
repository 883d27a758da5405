"""Simulation results: timelines, token log, access trace, metrics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field


def _r(t):
    """Normalise a time value for serialization (drop float noise)."""
    v = round(float(t), 6)
    return int(v) if v == int(v) else v


@dataclass
class SimReport:
    total_cycles: float
    timelines: dict          # (pid, group) -> [(t0, t1, state, detail)]
    round_log: dict          # (pid, group) -> [(t_start, t_end)]
    tokens: list             # Token objects
    accesses: list           # Access objects
    sys_clk_hz: int
    meta: dict = field(default_factory=dict)

    # -- metrics ------------------------------------------------------------

    def rounds_completed(self, pid, group="ST"):
        return len(self.round_log.get((pid, group), ()))

    def steady_cycles_per_round(self, pid, group="ST", skip=2):
        """Mean cycles per round after discarding ``skip`` warm-up rounds."""
        log = self.round_log.get((pid, group), ())
        if len(log) <= skip + 1:
            skip = 0
        if len(log) < 2:
            return float(self.total_cycles)
        window = log[skip:]
        return (window[-1][1] - window[0][1]) / max(1, len(window) - 1) \
            if len(window) > 1 else window[0][1] - window[0][0]

    def throughput_rounds_per_s(self, pid, group="ST", skip=2):
        cpr = self.steady_cycles_per_round(pid, group, skip)
        return self.sys_clk_hz / cpr if cpr > 0 else 0.0

    def round_latency(self, first_pid, last_pid, round_idx):
        """Start of LD round on the first stage to end of ST round on the last."""
        start = self.round_log[(first_pid, "LD")][round_idx][0]
        end = self.round_log[(last_pid, "ST")][round_idx][1]
        return end - start

    def busy_cycles(self, pid, group, state="compute"):
        return sum(t1 - t0 for (t0, t1, s, _) in
                   self.timelines.get((pid, group), ()) if s == state)

    # -- serialization --------------------------------------------------------

    def to_dict(self):
        return {
            "schema_version": 1,
            "total_cycles": _r(self.total_cycles),
            "sys_clk_hz": self.sys_clk_hz,
            "meta": self.meta,
            "rounds": {
                f"{pid}/{grp}": [[_r(a), _r(b)] for a, b in log]
                for (pid, grp), log in sorted(self.round_log.items())
            },
            "timelines": {
                f"{pid}/{grp}": [
                    {"t0": _r(a), "t1": _r(b), "state": s, "detail": d}
                    for a, b, s, d in tl
                ]
                for (pid, grp), tl in sorted(self.timelines.items())
            },
            "tokens": [
                {"kind": t.kind, "bid": t.bid, "src": t.src, "dst": t.dst,
                 "t_send": _r(t.t_send), "t_arrive": _r(t.t_arrive),
                 "t_deliver": _r(t.t_deliver)}
                for t in self.tokens
            ],
            "accesses": [
                {"pid": a.pid, "group": a.group, "rw": a.rw, "addr": a.addr,
                 "length": a.length, "t0": _r(a.t0), "t1": _r(a.t1)}
                for a in self.accesses
            ],
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def save_trace_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pid", "group", "t0", "t1", "state", "detail"])
            rows = []
            for (pid, grp), tl in self.timelines.items():
                for t0, t1, s, d in tl:
                    rows.append((pid, grp, _r(t0), _r(t1), s, d))
            rows.sort()
            w.writerows(rows)


def build_report(sim, total_cycles) -> SimReport:
    return SimReport(
        total_cycles=total_cycles,
        timelines={(p.pid, p.group): list(p.timeline) for p in sim.procs},
        round_log={(p.pid, p.group): list(p.round_log) for p in sim.procs},
        tokens=list(sim.token_log),
        accesses=list(sim.accesses),
        sys_clk_hz=sim.system.clocks.sys_clk_hz,
    )
