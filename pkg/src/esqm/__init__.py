"""ESQM with extrapolation for constrained difference-of-convex programs."""

from .problem import (
    AccuracyError,
    AffineModel,
    ContractError,
    NumericalError,
    ProblemSpec,
    SmoothConstraint,
    aggregate_moduli,
    beta_cap,
    build_models,
    lin_g,
    max_violation,
)
from .solver import SolveResult, SolverConfig, run
from .subproblem import SubproblemSolution, solve_multi, solve_single

__version__ = "0.1.0"
