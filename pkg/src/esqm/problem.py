"""Problem description for constrained DC programs.

A problem has the form

    minimize    P1(x) - P2(x)
    subject to  g_i(x) <= 0,  i = 1, ..., m,
                x in C,

where P1 is convex (possibly nonsmooth), P2 is convex, every g_i has a
Lipschitz gradient and splits as a difference of two convex functions with
Lipschitz gradients, and C is a compact convex set. The solver only needs
the Lipschitz moduli of the two halves of each g_i, never the halves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ContractError",
    "NumericalError",
    "AccuracyError",
    "SmoothConstraint",
    "ProblemSpec",
    "AffineModel",
    "lin_g",
    "build_models",
    "aggregate_moduli",
    "beta_cap",
    "max_violation",
]


class ContractError(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalError(ArithmeticError):
    """Raised when an oracle or an iterate produces non-finite values."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class AccuracyError(RuntimeError):
    """Raised when an iterative routine hits its cap before its tolerance."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


Oracle = Callable[[np.ndarray], float]
VectorOracle = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SmoothConstraint:
    """One smooth inequality constraint ``g(x) <= 0``.

    Parameters
    ----------
    eval : callable
        ``x -> g(x)``.
    grad : callable
        ``x -> grad g(x)``.
    modulus_L : float
        Lipschitz modulus of the gradient of the convex part ``g^1``.
    modulus_ell : float
        Lipschitz modulus of the gradient of the concave part ``g^2``.
        Must not exceed ``modulus_L``.
    """

    eval: Oracle
    grad: VectorOracle
    modulus_L: float
    modulus_ell: float = 0.0

    def __post_init__(self):
        if not self.modulus_L > 0:
            raise ContractError("modulus_L must be positive")
        if self.modulus_ell < 0:
            raise ContractError("modulus_ell must be nonnegative")
        if self.modulus_ell > self.modulus_L:
            raise ContractError(
                "modulus_L must dominate modulus_ell; enlarge modulus_L")


@dataclass(frozen=True)
class ProblemSpec:
    """Oracles and constants describing one constrained DC program.

    ``p1_composite_prox(v, z, rho)`` must return the minimizer over C of
    ``P1(x) + <v, x> + (rho/2)||x - z||^2``; P1 and C are only accessed
    jointly through it. ``p_lower_bound`` and ``p1_lower_bound`` are any
    valid lower bounds of P and P1 over C.

    ``convex`` declares that P2 is identically zero and every g_i is convex.
    It is not verified.
    """

    p1_eval: Oracle
    p1_composite_prox: Callable[[np.ndarray, np.ndarray, float], np.ndarray]
    p2_eval: Oracle
    p2_subgrad: VectorOracle
    constraints: Sequence[SmoothConstraint]
    c_project: VectorOracle
    c_contains: Callable[[np.ndarray], bool]
    p_lower_bound: float
    p1_lower_bound: float
    dimension: int
    convex: bool = False
    name: str = field(default="problem", compare=False)

    def __post_init__(self):
        if len(self.constraints) < 1:
            raise ContractError("at least one constraint is required")
        if self.dimension < 1:
            raise ContractError("dimension must be positive")

    @property
    def m(self):
        return len(self.constraints)

    def objective(self, x):
        """P(x) = P1(x) - P2(x)."""
        return self.p1_eval(x) - self.p2_eval(x)

    def constraint_values(self, x):
        return np.array([c.eval(x) for c in self.constraints])


@dataclass(frozen=True)
class AffineModel:
    """Linearization ``u -> slope @ u + offset`` of a constraint at an anchor."""

    slope: np.ndarray
    offset: float

    @classmethod
    def at(cls, constraint, w):
        """Build the first-order model of ``constraint`` anchored at ``w``."""
        gw = float(constraint.eval(w))
        a = np.asarray(constraint.grad(w), dtype=float)
        return cls(slope=a, offset=gw - float(a @ w))

    def __call__(self, u):
        return lin_g(self, u)


def lin_g(model, u):
    """Evaluate the linearized constraint ``g(w) + <grad g(w), u - w>``."""
    u = np.asarray(u, dtype=float)
    if u.shape != model.slope.shape:
        raise ContractError(
            f"dimension mismatch: {u.shape} vs {model.slope.shape}")
    return float(model.slope @ u) + model.offset


def build_models(problem, y):
    """Return one :class:`AffineModel` per constraint, anchored at ``y``."""
    y = np.asarray(y, dtype=float)
    if y.shape != (problem.dimension,):
        raise ContractError(f"anchor has shape {y.shape}, "
                            f"expected ({problem.dimension},)")
    return [AffineModel.at(c, y) for c in problem.constraints]


def aggregate_moduli(problem):
    """Return ``(L_g, ell_g)``, the maxima of the per-constraint moduli."""
    constraints = getattr(problem, "constraints", problem)
    if len(constraints) == 0:
        raise ContractError("no constraints")
    L_g = max(c.modulus_L for c in constraints)
    ell_g = max(c.modulus_ell for c in constraints)
    return L_g, ell_g


def beta_cap(L_g, ell_g):
    """Supremum allowed for the extrapolation weights, sqrt(L/(L + ell))."""
    if not L_g > 0:
        raise ContractError("L_g must be positive")
    if ell_g < 0:
        raise ContractError("ell_g must be nonnegative")
    return float(np.sqrt(L_g / (L_g + ell_g)))


def max_violation(problem, x):
    """Largest positive part of the constraint values at ``x``."""
    return max(0.0, float(np.max(problem.constraint_values(x))))
