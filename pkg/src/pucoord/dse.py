"""Design-space exploration over PU pool allocations.

A deployment assigns the fabric's PUs to one or more independent
pipelines, each compiled for a sub-pool (x 1x-PUs, y 2x-PUs).  The
explorer enumerates:

* single pipelines — every non-empty sub-pool of the fabric,
* hybrid deployments — multisets of single-pipeline configurations
  whose combined PU usage fits the fabric.

Each point carries analytic estimates (stage makespan including weight
stalls, round latency, pipeline balance efficiency); Pareto filtering
keeps points that are not beaten on both throughput and latency by
more than the comparison tolerance.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

from . import graph as graphmod
from .compiler.partition import PartitionError, partition_nodes
from .compiler.profile import profile_dag, tile_gemm_cycles
from .compiler.weights import WeightInfeasible, schedule_weights
from .sim.system import SystemSpec


@dataclass(frozen=True)
class DesignPoint:
    pools: tuple                   # member sub-pools, e.g. ((2, 1), (2, 1))
    pus_1x: int
    pus_2x: int
    pipelines: int
    stages: int                    # total across members
    cycles_per_round: float        # slowest member's bottleneck stage
    throughput_per_s: float        # aggregate over members
    latency_cycles: float          # slowest member's fill latency
    latency_s: float
    balance_efficiency: float      # worst member
    per_pipeline: tuple = ()       # throughput of each member

    def to_dict(self):
        return {
            "pools": [list(p) for p in self.pools],
            "pus_1x": self.pus_1x,
            "pus_2x": self.pus_2x,
            "pipelines": self.pipelines,
            "stages": self.stages,
            "cycles_per_round": round(self.cycles_per_round, 3),
            "throughput_per_s": round(self.throughput_per_s, 3),
            "latency_cycles": round(self.latency_cycles, 3),
            "latency_s": self.latency_s,
            "balance_efficiency": round(self.balance_efficiency, 4),
            "per_pipeline": [round(t, 3) for t in self.per_pipeline],
        }


@dataclass
class _Pipeline:
    pool: tuple
    stages: int
    bottleneck: float              # cycles/round incl. weight stalls
    latency: float                 # sum of stage times
    balance: float


def _evaluate_pool(dag, profiles, system, x, y, cost_model=None):
    """Analytic estimate of one pipeline on an (x, y) sub-pool."""
    node_ids = [n.id for n in dag.pu_nodes]
    part = partition_nodes(node_ids, profiles, x, y)
    uram = {p.pu_type: p.uram_capacity_bytes for p in system.pus}
    bw = system.hbm.bytes_per_cycle_per_channel
    times = []
    for stage in part.stages:
        tc = {nid: tile_gemm_cycles(dag.node(nid), stage.pu_type, system,
                                    cost_model)
              for nid in stage.nodes}
        wplan = schedule_weights([dag.node(n) for n in stage.nodes], tc,
                                 uram[stage.pu_type], bw)
        times.append(stage.cycles + wplan.stall_cycles)
    bottleneck = max(times)
    return _Pipeline(
        pool=(x, y),
        stages=len(part.stages),
        bottleneck=bottleneck,
        latency=sum(times),
        balance=(sum(times) / len(times) / bottleneck) if times else 0.0,
    )


def _point(system, members):
    clk = system.clocks.sys_clk_hz
    thr = [clk / p.bottleneck for p in members]
    latency = max(p.latency for p in members)
    return DesignPoint(
        pools=tuple(p.pool for p in members),
        pus_1x=sum(p.pool[0] for p in members),
        pus_2x=sum(p.pool[1] for p in members),
        pipelines=len(members),
        stages=sum(p.stages for p in members),
        cycles_per_round=max(p.bottleneck for p in members),
        throughput_per_s=sum(thr),
        latency_cycles=latency,
        latency_s=latency / clk,
        balance_efficiency=min(p.balance for p in members),
        per_pipeline=tuple(thr),
    )


def enumerate_single(ir, system: SystemSpec, *, cost_model=None):
    """One DesignPoint per non-empty sub-pool (x <= A, y <= B).

    Sub-pools whose pipeline is infeasible (weights cannot fit, or the
    partition fails) are silently skipped.
    """
    dag = graphmod.tile(graphmod.fuse(graphmod.ingest(ir)))
    profiles = profile_dag(dag, system, cost_model)
    a, b = system.pool_counts()
    points = []
    for x in range(a + 1):
        for y in range(b + 1):
            if x + y == 0:
                continue
            try:
                pipe = _evaluate_pool(dag, profiles, system, x, y, cost_model)
            except (PartitionError, WeightInfeasible):
                continue
            points.append(_point(system, [pipe]))
    return points


def compose_multi(ir, system: SystemSpec, *, max_pipelines=None,
                  cost_model=None):
    """All hybrid deployments: multisets of sub-pool pipelines that fit.

    Members are chosen from the feasible single-pipeline catalog; a
    deployment is kept when its total 1x/2x usage fits the fabric and
    it has at most ``max_pipelines`` members.
    """
    dag = graphmod.tile(graphmod.fuse(graphmod.ingest(ir)))
    profiles = profile_dag(dag, system, cost_model)
    a, b = system.pool_counts()
    catalog = []
    for x in range(a + 1):
        for y in range(b + 1):
            if x + y == 0:
                continue
            try:
                catalog.append(
                    _evaluate_pool(dag, profiles, system, x, y, cost_model))
            except (PartitionError, WeightInfeasible):
                continue

    cap = max_pipelines if max_pipelines is not None else a + b
    points = []

    def rec(start, ra, rb, acc):
        if acc:
            points.append(_point(system, acc))
        if len(acc) >= cap:
            return
        for i in range(start, len(catalog)):
            p = catalog[i]
            if p.pool[0] <= ra and p.pool[1] <= rb:
                acc.append(p)
                rec(i, ra - p.pool[0], rb - p.pool[1], acc)
                acc.pop()

    rec(0, a, b, [])
    return points


def pareto(points, *, rel_tol=0.01, max_latency_s=None, min_throughput=None):
    """Non-dominated points under throughput (max) and latency (min).

    ``p`` dominates ``q`` when it is no worse on both axes and more
    than ``rel_tol`` better on at least one.  Optional constraints drop
    points before filtering.
    """
    cand = [
        p for p in points
        if (max_latency_s is None or p.latency_s <= max_latency_s)
        and (min_throughput is None or p.throughput_per_s >= min_throughput)
    ]

    def dominates(p, q):
        no_worse = (p.throughput_per_s >= q.throughput_per_s * (1 - rel_tol)
                    and p.latency_cycles <= q.latency_cycles * (1 + rel_tol))
        better = (p.throughput_per_s > q.throughput_per_s * (1 + rel_tol)
                  or p.latency_cycles < q.latency_cycles * (1 - rel_tol))
        return no_worse and better

    keep = [p for p in cand
            if not any(dominates(q, p) for q in cand if q is not p)]
    keep.sort(key=lambda p: (-p.throughput_per_s, p.latency_cycles, p.pools))
    return keep


def save_results(points, json_path=None, csv_path=None) -> None:
    docs = [p.to_dict() for p in points]
    if json_path:
        with open(json_path, "w") as fh:
            json.dump({"points": docs}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if csv_path:
        cols = ["pools", "pus_1x", "pus_2x", "pipelines", "stages",
                "cycles_per_round", "throughput_per_s", "latency_cycles",
                "latency_s", "balance_efficiency"]
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for d in docs:
                row = dict(d, pools=";".join(f"{x}+{y}" for x, y in d["pools"]))
                w.writerow([row[c] for c in cols])
