"""Pyramidal relaxations of the branch-flow ACOPF with a native branch-and-cut."""

from .bfm import build_base_model, conic_errors, epsilon_feasible
from .bnc import SolveConfig, SolveReport, branch_and_cut
from .case_io import load_bundled, parse_case, read_case, validate_case, write_case
from .rnf import direct_pyramid_oracle, rnf_trace, theta, tolerance
from .solve import solve_case

__version__ = "0.1.0"

__all__ = [
    "SolveConfig", "SolveReport", "branch_and_cut", "build_base_model", "conic_errors",
    "direct_pyramid_oracle", "epsilon_feasible", "load_bundled", "parse_case", "read_case",
    "rnf_trace", "solve_case", "theta", "tolerance", "validate_case", "write_case",
]
