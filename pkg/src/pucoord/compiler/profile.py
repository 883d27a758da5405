"""Per-node execution profiles used by the pipeline partitioner.

A PU executes the three groups of one node concurrently with its
neighbours in the round loop, so a stage's steady-state round time is
bounded by whichever group carries the most total work.  The profile
records each component per node so slice costs can be computed by
prefix sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..sim.cost import GemmCostModel
from ..sim.system import PU_TYPES, SystemSpec

# fixed per-node control overhead added to each group's round share
# (handshakes, address cycling, configuration instructions)
SEG_OVERHEAD_CYCLES = 8


@dataclass(frozen=True)
class NodeProfile:
    node_id: str
    ld_cycles: dict        # pu_type -> cycles
    cp_cycles: dict
    st_cycles: dict
    weight_cycles: dict    # full weight stream time, for the weight scheduler

    def exec_cycles(self, pu_type: str) -> int:
        return max(self.ld_cycles[pu_type], self.cp_cycles[pu_type],
                   self.st_cycles[pu_type])


def tile_gemm_cycles(node, pu_type: str, system: SystemSpec,
                     cost_model: GemmCostModel | None = None) -> list:
    """Per-tile GEMM cycles for one node on the given PU type."""
    cost_model = cost_model or GemmCostModel()
    cols = {p.pu_type: p.sa_cols for p in system.pus}.get(pu_type)
    if cols is None:
        cols = 4 if pu_type == "1x" else 8
    per_cycle = 64 * cols * system.clocks.dsp_clk_ratio
    _, kdim, ndim = node.gemm_dims
    return [
        max(1, math.ceil(t.rows * kdim * ndim / per_cycle
                         / cost_model.efficiency))
        for t in node.tiles
    ]


def profile_node(node, dag, system: SystemSpec,
                 cost_model: GemmCostModel | None = None) -> NodeProfile:
    cost_model = cost_model or GemmCostModel()
    bw = system.hbm.bytes_per_cycle_per_channel
    in_tids = set(node.inputs)
    if node.residual_input:
        in_tids.add(node.residual_input)
    in_bytes = sum(dag.tensors[t].byte_size for t in in_tids)
    out_bytes = dag.tensors[node.output].byte_size
    ld = math.ceil(in_bytes / bw) + SEG_OVERHEAD_CYCLES
    st = math.ceil(out_bytes / bw) + SEG_OVERHEAD_CYCLES
    wload = math.ceil(node.weight_bytes / bw)

    cp = {
        pu_type: sum(tile_gemm_cycles(node, pu_type, system, cost_model))
        + SEG_OVERHEAD_CYCLES
        for pu_type in PU_TYPES
    }

    return NodeProfile(
        node_id=node.id,
        ld_cycles={t: ld for t in PU_TYPES},
        cp_cycles=cp,
        st_cycles={t: st for t in PU_TYPES},
        weight_cycles={t: wload for t in PU_TYPES},
    )


def profile_dag(dag, system: SystemSpec, cost_model=None) -> dict:
    """node_id -> NodeProfile, for every PU node (tiles must be present)."""
    out = {}
    for node in dag.pu_nodes:
        if not node.tiles:
            raise ValueError(f"node {node.id} has no tiles; run tile() first")
        out[node.id] = profile_node(node, dag, system, cost_model)
    return out


def slice_cycles(profiles, node_ids, pu_type: str) -> int:
    """Steady round time of one stage running ``node_ids`` on ``pu_type``."""
    if not node_ids:
        return 0
    ld = sum(profiles[v].ld_cycles[pu_type] for v in node_ids)
    cp = sum(profiles[v].cp_cycles[pu_type] for v in node_ids)
    st = sum(profiles[v].st_cycles[pu_type] for v in node_ids)
    return max(ld, cp, st)
