"""System description: PU pool, HBM, ISU latency parameters, clocks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

PU_TYPES = ("1x", "2x")

# HBM address map: one 256 MiB window per channel, addresses are 33-bit.
CHANNEL_SHIFT = 28
CHANNEL_BYTES = 1 << CHANNEL_SHIFT


class SystemError_(Exception):
    pass


class UnknownPid(SystemError_):
    def __init__(self, pid):
        super().__init__(f"unknown PU id {pid}")


@dataclass
class PuSpec:
    pid: int
    pu_type: str                    # "1x" or "2x"
    sa_rows: int = 64
    sa_cols: int = 0                # 0 -> default by type (4 or 8)
    slr: int = 0
    uram_capacity_bytes: int = 2_359_296   # 64 URAMs x 36 KiB
    act_buffer_bytes: int = 1 << 19

    def __post_init__(self):
        if self.pu_type not in PU_TYPES:
            raise SystemError_(f"unknown PU type {self.pu_type!r}")
        if self.sa_cols == 0:
            self.sa_cols = 4 if self.pu_type == "1x" else 8


@dataclass
class HbmSpec:
    num_channels: int = 32
    bytes_per_cycle_per_channel: int = 32


@dataclass
class IsuSpec:
    same_pu_cycles: int = 2
    same_slr_hop_cycles: int = 1           # extra beyond one hop within an SLR
    slr_crossing_penalty_cycles: int = 13
    latency_matrix: list | None = None     # optional explicit override


@dataclass
class ClockSpec:
    sys_clk_hz: int = 300_000_000
    dsp_clk_ratio: int = 2


@dataclass
class SystemSpec:
    pus: list
    hbm: HbmSpec = field(default_factory=HbmSpec)
    isu: IsuSpec = field(default_factory=IsuSpec)
    clocks: ClockSpec = field(default_factory=ClockSpec)

    def __post_init__(self):
        pids = [p.pid for p in self.pus]
        if len(set(pids)) != len(pids):
            raise SystemError_("duplicate PU ids")
        cols = {t: {p.sa_cols for p in self.pus if p.pu_type == t} for t in PU_TYPES}
        if cols["1x"] and cols["2x"]:
            if {2 * c for c in cols["1x"]} != cols["2x"]:
                raise SystemError_("2x PUs must have twice the SA columns of 1x PUs")
        self._by_pid = {p.pid: p for p in self.pus}
        # position of each PU within its SLR, in pid order
        self._slr_pos = {}
        for slr in sorted({p.slr for p in self.pus}):
            for i, p in enumerate(sorted((p for p in self.pus if p.slr == slr),
                                         key=lambda p: p.pid)):
                self._slr_pos[p.pid] = i

    def pu(self, pid: int) -> PuSpec:
        try:
            return self._by_pid[pid]
        except KeyError:
            raise UnknownPid(pid) from None

    def pool_counts(self) -> tuple:
        a = sum(1 for p in self.pus if p.pu_type == "1x")
        b = sum(1 for p in self.pus if p.pu_type == "2x")
        return a, b

    def pu_tops(self, pid: int) -> float:
        """Peak DSP TOPS of one PU (MAC = 2 ops, at dsp_clk)."""
        p = self.pu(pid)
        dsp_clk = self.clocks.sys_clk_hz * self.clocks.dsp_clk_ratio
        return p.sa_rows * p.sa_cols * 2 * dsp_clk / 1e12


def route_latency(src_pid: int, dst_pid: int, spec: SystemSpec) -> int:
    """Control-token delivery latency in sys-clk cycles.

    Same PU bypasses the switch fabric; same-SLR paths cost 2-3 cycles
    depending on hop count; each SLR boundary crossed adds a fixed penalty.
    An explicit latency matrix, when configured, overrides the formula.
    """
    isu = spec.isu
    if isu.latency_matrix is not None:
        pids = sorted(p.pid for p in spec.pus)
        try:
            return isu.latency_matrix[pids.index(src_pid)][pids.index(dst_pid)]
        except (ValueError, IndexError):
            raise UnknownPid((src_pid, dst_pid)) from None
    a = spec.pu(src_pid)
    b = spec.pu(dst_pid)
    if src_pid == dst_pid:
        return isu.same_pu_cycles
    if a.slr == b.slr:
        hops = abs(spec._slr_pos[src_pid] - spec._slr_pos[dst_pid])
        return isu.same_pu_cycles + (isu.same_slr_hop_cycles if hops > 1 else 0)
    crossings = abs(a.slr - b.slr)
    return (isu.same_pu_cycles + isu.same_slr_hop_cycles
            + isu.slr_crossing_penalty_cycles * crossings)


def channel_of(addr: int) -> int:
    return addr >> CHANNEL_SHIFT


def default_system(a: int = 5, b: int = 5) -> SystemSpec:
    """Default pool: `a` 1x PUs then `b` 2x PUs, split across two SLRs."""
    pus = []
    total = a + b
    for i in range(total):
        pu_type = "1x" if i < a else "2x"
        slr = 0 if i < (total + 1) // 2 else 1
        pus.append(PuSpec(pid=i, pu_type=pu_type, slr=slr))
    return SystemSpec(pus=pus)


def spec_to_dict(spec: SystemSpec) -> dict:
    return {
        "schema_version": 1,
        "pus": [
            {"pid": p.pid, "pu_type": p.pu_type, "sa_rows": p.sa_rows,
             "sa_cols": p.sa_cols, "slr": p.slr,
             "uram_capacity_bytes": p.uram_capacity_bytes,
             "act_buffer_bytes": p.act_buffer_bytes}
            for p in spec.pus
        ],
        "hbm": {"num_channels": spec.hbm.num_channels,
                "bytes_per_cycle_per_channel": spec.hbm.bytes_per_cycle_per_channel},
        "isu": {"same_pu_cycles": spec.isu.same_pu_cycles,
                "same_slr_hop_cycles": spec.isu.same_slr_hop_cycles,
                "slr_crossing_penalty_cycles": spec.isu.slr_crossing_penalty_cycles,
                "latency_matrix": spec.isu.latency_matrix},
        "clocks": {"sys_clk_hz": spec.clocks.sys_clk_hz,
                   "dsp_clk_ratio": spec.clocks.dsp_clk_ratio},
    }


def spec_from_dict(doc: dict) -> SystemSpec:
    try:
        pus = [PuSpec(**{k: v for k, v in raw.items()}) for raw in doc["pus"]]
        hbm = HbmSpec(**doc.get("hbm", {}))
        isu = IsuSpec(**doc.get("isu", {}))
        clocks = ClockSpec(**doc.get("clocks", {}))
    except (KeyError, TypeError) as exc:
        raise SystemError_(f"bad system spec: {exc}") from None
    return SystemSpec(pus=pus, hbm=hbm, isu=isu, clocks=clocks)


def load_system(path) -> SystemSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))


def save_system(spec: SystemSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
