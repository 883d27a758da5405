"""Compiled plans: orchestration, serialization, and plan-level metrics."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .. import graph as graphmod
from ..isa import Program, disassemble, read_image, write_image
from ..sim import Simulator, SystemSpec, spec_from_dict, spec_to_dict
from .buffers import plan_buffers
from .codegen import generate_stage
from .partition import assign_pids, partition_nodes
from .profile import profile_dag, slice_cycles, tile_gemm_cycles
from .weights import schedule_weights


class PlanError(Exception):
    pass


@dataclass
class CompiledPlan:
    pool: tuple                    # (a, b) PUs offered to the partitioner
    system: SystemSpec
    stage_summaries: list          # list of dicts, pipeline order
    images: dict                   # (pid, group) -> Program
    segments: dict                 # (pid, group) -> [(start, end)]
    tensors: dict                  # tensor_id -> placement dict
    estimates: dict                # makespan, pbe, per-stage cycles, stalls
    host_notes: list = field(default_factory=list)
    # rich in-process objects; absent on plans reloaded from disk
    partition: object = None
    profiles: dict | None = None
    dag: object = None

    @property
    def first_pid(self) -> int:
        return self.stage_summaries[0]["pid"]

    @property
    def last_pid(self) -> int:
        return self.stage_summaries[-1]["pid"]

    @property
    def pids(self) -> list:
        return [s["pid"] for s in self.stage_summaries]


def compile_model(ir, system: SystemSpec, a: int, b: int, *,
                  cost_model=None) -> CompiledPlan:
    """Full pipeline: IR -> fused/tiled DAG -> partition -> programs."""
    dag = graphmod.tile(graphmod.fuse(graphmod.ingest(ir)))
    profiles = profile_dag(dag, system, cost_model)
    node_ids = [n.id for n in dag.pu_nodes]
    part = partition_nodes(node_ids, profiles, a, b)
    assign_pids(part, system)
    bufs = plan_buffers(dag, part, system)

    summaries = []
    images = {}
    segments = {}
    total_stall = 0
    for stage in part.stages:
        pu = system.pu(stage.pid)
        tcycles = {nid: tile_gemm_cycles(dag.node(nid), stage.pu_type, system)
                   for nid in stage.nodes}
        wplan = schedule_weights(
            [dag.node(n) for n in stage.nodes], tcycles,
            pu.uram_capacity_bytes, system.hbm.bytes_per_cycle_per_channel,
            pid=stage.pid)
        sp = generate_stage(stage, dag, bufs, wplan)
        for group, prog in sp.programs.items():
            images[(stage.pid, group)] = prog
            segments[(stage.pid, group)] = sp.segments[group]
        total_stall += wplan.stall_cycles
        summaries.append({
            "pid": stage.pid,
            "pu_type": stage.pu_type,
            "nodes": list(stage.nodes),
            "cycles_est": stage.cycles,
            "weight_offline": wplan.offline,
            "weight_dynamic": wplan.dynamic,
            "weight_stall_est": wplan.stall_cycles,
            "uram_occupancy": round(wplan.occupancy, 4),
        })

    estimates = {
        "makespan_cycles": part.makespan,
        "balance_efficiency": round(part.balance_efficiency(), 4),
        "weight_stall_cycles": total_stall,
        "stage_cycles": [s.cycles for s in part.stages],
    }
    tensor_docs = {
        tid: {
            "channel": p.channel, "base_addr": p.base_addr,
            "slot_bytes": p.slot_bytes, "payload_bytes": p.payload_bytes,
            "slots": p.slots, "synced": p.synced,
            "producer_pid": p.producer_pid,
            "consumer_pids": p.consumer_pids,
            "bids": {str(k): v for k, v in p.bids.items()},
        }
        for tid, p in bufs.tensors.items()
    }
    return CompiledPlan(
        pool=(a, b), system=system, stage_summaries=summaries,
        images=images, segments=segments, tensors=tensor_docs,
        estimates=estimates, host_notes=list(dag.host_notes),
        partition=part, profiles=profiles, dag=dag,
    )


@dataclass
class PlanMetrics:
    rounds: int
    total_cycles: float
    cycles_per_round: float
    throughput_per_s: float
    latency_cycles: float
    latency_s: float
    stage_busy_cycles: dict        # pid -> per-round busy of critical group
    measured_pbe: float

    def to_dict(self):
        return {
            "rounds": self.rounds,
            "total_cycles": round(self.total_cycles, 3),
            "cycles_per_round": round(self.cycles_per_round, 3),
            "throughput_per_s": round(self.throughput_per_s, 3),
            "latency_cycles": round(self.latency_cycles, 3),
            "latency_s": self.latency_s,
            "stage_busy_cycles": {str(k): round(v, 3)
                                  for k, v in self.stage_busy_cycles.items()},
            "measured_pbe": round(self.measured_pbe, 4),
        }


_BUSY_STATES = ("ctrl", "hbm", "compute")


def simulate_plan(plan: CompiledPlan, rounds: int, *, system=None,
                  limit=1_000_000_000, cost_model=None):
    """Run a compiled plan for ``rounds`` inputs -> (SimReport, PlanMetrics)."""
    system = system or plan.system
    sim = Simulator(system, plan.images, segments=plan.segments,
                    rounds=rounds, limit=limit, cost_model=cost_model)
    report = sim.run()
    report.meta["pool"] = list(plan.pool)

    per_round = report.steady_cycles_per_round(plan.last_pid, "ST")
    clk = system.clocks.sys_clk_hz
    mid = max(0, min(rounds - 1, rounds // 2))
    latency = report.round_latency(plan.first_pid, plan.last_pid, mid) \
        if rounds > 0 else 0.0

    stage_busy = {}
    done = max(1, rounds)
    for pid in plan.pids:
        per_group = []
        for grp in ("LD", "CP", "ST"):
            busy = sum(report.busy_cycles(pid, grp, s) for s in _BUSY_STATES)
            per_group.append(busy / done)
        stage_busy[pid] = max(per_group)
    vals = list(stage_busy.values())
    pbe = (sum(vals) / len(vals) / max(vals)) if vals and max(vals) else 0.0

    metrics = PlanMetrics(
        rounds=rounds,
        total_cycles=report.total_cycles,
        cycles_per_round=per_round,
        throughput_per_s=clk / per_round if per_round else 0.0,
        latency_cycles=latency,
        latency_s=latency / clk,
        stage_busy_cycles=stage_busy,
        measured_pbe=pbe,
    )
    return report, metrics


# -- persistence --------------------------------------------------------------


def save_plan(plan: CompiledPlan, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "listings"), exist_ok=True)
    doc = {
        "schema_version": 1,
        "pool": list(plan.pool),
        "system": spec_to_dict(plan.system),
        "stages": plan.stage_summaries,
        "segments": {
            f"{pid}/{grp}": [list(s) for s in segs]
            for (pid, grp), segs in sorted(plan.segments.items())
        },
        "tensors": plan.tensors,
        "estimates": plan.estimates,
        "host_notes": plan.host_notes,
    }
    with open(os.path.join(out_dir, "plan.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for (pid, grp), prog in sorted(plan.images.items()):
        blob = write_image(prog, pu_id=pid)
        with open(os.path.join(out_dir, "images", f"pu{pid}_{grp}.bin"),
                  "wb") as fh:
            fh.write(blob)
        with open(os.path.join(out_dir, "listings", f"pu{pid}_{grp}.asm"),
                  "w") as fh:
            fh.write(disassemble(prog))


def load_plan(in_dir: str) -> CompiledPlan:
    with open(os.path.join(in_dir, "plan.json")) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != 1:
        raise PlanError("unsupported plan schema")
    images = {}
    segments = {}
    for key, segs in doc["segments"].items():
        pid_s, grp = key.split("/")
        pid = int(pid_s)
        path = os.path.join(in_dir, "images", f"pu{pid}_{grp}.bin")
        with open(path, "rb") as fh:
            got_pid, prog = read_image(fh.read())
        if got_pid != pid:
            raise PlanError(f"{path}: header PU id {got_pid} != {pid}")
        images[(pid, grp)] = prog
        segments[(pid, grp)] = [tuple(s) for s in segs]
    return CompiledPlan(
        pool=tuple(doc["pool"]),
        system=spec_from_dict(doc["system"]),
        stage_summaries=doc["stages"],
        images=images,
        segments=segments,
        tensors=doc["tensors"],
        estimates=doc["estimates"],
        host_notes=doc.get("host_notes", []),
    )
