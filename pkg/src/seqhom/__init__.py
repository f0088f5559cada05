"""Sequential homotopy solver for box- and equality-constrained problems."""

from .core import PrimalDual, ProblemSpec, SpaceMetric, check_derivatives, z_norm
from .estimator import SequentialHomotopy
from .homotopy import DriverParams, SolveLog, SolveResult, fixed_lambda_solve, solve

__version__ = "0.1.0"

__all__ = [
    "PrimalDual", "ProblemSpec", "SpaceMetric", "check_derivatives", "z_norm",
    "DriverParams", "SolveLog", "SolveResult", "fixed_lambda_solve", "solve",
    "SequentialHomotopy",
]
