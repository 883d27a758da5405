"""Cycle-level simulator for the multi-PU pipeline."""

from .arbiter import RoundRobinArbiter, arbitrate
from .cost import DEFAULT_COST_MODEL, GemmCostModel
from .engine import (
    Access,
    BadAddress,
    DeadlockDetected,
    LimitExceeded,
    SimError,
    Simulator,
    Token,
)
from .hazards import Hazard, detect_hazards
from .report import SimReport
from .system import (
    CHANNEL_BYTES,
    ClockSpec,
    HbmSpec,
    IsuSpec,
    PuSpec,
    SystemSpec,
    UnknownPid,
    channel_of,
    default_system,
    load_system,
    route_latency,
    save_system,
    spec_from_dict,
    spec_to_dict,
)

__all__ = [
    "Access", "BadAddress", "CHANNEL_BYTES", "ClockSpec", "DeadlockDetected",
    "DEFAULT_COST_MODEL", "GemmCostModel", "Hazard", "HbmSpec", "IsuSpec",
    "LimitExceeded", "PuSpec", "RoundRobinArbiter", "SimError", "SimReport",
    "Simulator", "SystemSpec", "Token", "UnknownPid", "arbitrate",
    "channel_of", "default_system", "detect_hazards", "load_system",
    "route_latency", "save_system", "spec_from_dict", "spec_to_dict",
]
