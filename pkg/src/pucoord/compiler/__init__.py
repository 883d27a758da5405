"""Model-to-programs compiler for the PU pipeline."""

from .buffers import (
    BufferError,
    BufferPlan,
    ChannelsExhausted,
    TensorPlacement,
    WeightRegion,
    plan_buffers,
    tensor_depth,
)
from .codegen import CodegenError, StagePrograms, generate_stage
from .partition import (
    Partition,
    PartitionError,
    Stage,
    assign_pids,
    brute_force_partition,
    partition_nodes,
)
from .plan import (
    CompiledPlan,
    PlanError,
    PlanMetrics,
    compile_model,
    load_plan,
    save_plan,
    simulate_plan,
)
from .profile import NodeProfile, profile_dag, profile_node, slice_cycles
from .weights import (
    WeightInfeasible,
    WeightPlan,
    peak_occupancy,
    schedule_weights,
)

__all__ = [
    "BufferError", "BufferPlan", "ChannelsExhausted", "CodegenError",
    "CompiledPlan", "NodeProfile", "Partition", "PartitionError", "PlanError",
    "PlanMetrics", "Stage", "StagePrograms", "TensorPlacement",
    "WeightInfeasible", "WeightPlan", "WeightRegion", "assign_pids",
    "brute_force_partition", "compile_model", "generate_stage", "load_plan",
    "partition_nodes", "peak_occupancy", "plan_buffers", "profile_dag",
    "profile_node", "save_plan", "schedule_weights", "simulate_plan",
    "slice_cycles", "tensor_depth",
]
