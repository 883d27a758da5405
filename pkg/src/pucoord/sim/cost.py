"""Compute-cost model for the systolic array."""

from __future__ import annotations

import math


class GemmCostModel:
    """Cycle cost of one GEMM on a PU's systolic array.

    The array retires ``sa_rows * sa_cols * dsp_clk_ratio`` MACs per
    sys-clk cycle at ``efficiency`` sustained utilisation.
    """

    def __init__(self, efficiency: float = 0.98):
        if not 0.0 < efficiency <= 1.0:
            raise ValueError(f"efficiency must be in (0, 1], got {efficiency}")
        self.efficiency = efficiency

    def macs(self, instr) -> int:
        return instr.m * instr.k * instr.n * max(instr.rounds, 1)

    def cycles(self, instr, pu, clocks) -> int:
        per_cycle = pu.sa_rows * pu.sa_cols * clocks.dsp_clk_ratio
        return max(1, math.ceil(self.macs(instr) / per_cycle / self.efficiency))


DEFAULT_COST_MODEL = GemmCostModel()
