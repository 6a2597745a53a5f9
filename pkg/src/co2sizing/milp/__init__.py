"""Diameter-selection MILP and the in-house LP/branch-and-bound engine."""

from .model import (
    FeasibilityReport,
    MilpConfig,
    Mode,
    ModelError,
    PipeGroup,
    SizingModel,
    SizingSolution,
    SolveStatus,
    build_model,
    check_feasible,
    diagnose_infeasibility,
    solve,
    to_lp_format,
    write_lp,
)
from .simplex import LPProblem, LPStatus, solve_lp

__all__ = [
    "FeasibilityReport", "LPProblem", "LPStatus", "MilpConfig", "Mode", "ModelError", "PipeGroup",
    "SizingModel", "SizingSolution", "SolveStatus", "build_model", "check_feasible",
    "diagnose_infeasibility", "solve", "solve_lp", "to_lp_format", "write_lp",
]
