"""Extended sequential quadratic method with extrapolation (ESQM_e).

Each iteration extrapolates ``y = x + beta (x - x_prev)``, linearizes every
constraint at ``y``, solves the hinge-penalized proximal subproblem, and
raises the penalty parameter by ``d`` whenever the new point violates a
linearized constraint. Extrapolation weights follow the FISTA recursion with
a fixed restart period and an adaptive restart test; setting
``SolverConfig.extrapolate = False`` gives the basic method (ESQM_b).
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .problem import (
    ContractError,
    NumericalError,
    aggregate_moduli,
    beta_cap,
    build_models,
    lin_g,
    max_violation,
)
from .subproblem import solve_multi, solve_single

__all__ = [
    "SolverConfig",
    "IterateState",
    "IterationRecord",
    "SolveResult",
    "next_beta",
    "adaptive_restart_fired",
    "extrapolate",
    "update_theta",
    "terminated",
    "run",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one ESQM run.

    ``record_trace`` keeps full iterate vectors and potential values in the
    trace; scalars are always recorded. ``subproblem_tol`` only affects
    problems with several constraints and defaults to ``min(1e-10, eps^2)``.
    """

    theta0: float = 1.0
    d: float = 1.0
    epsilon: float = 1e-4
    restart_period_K: int = 200
    adaptive_restart: bool = True
    beta_safety: float = 0.999
    max_iters: int = 50_000
    subproblem_tol: Optional[float] = None
    record_trace: bool = False
    extrapolate: bool = True

    def __post_init__(self):
        if not self.theta0 > 0:
            raise ContractError("theta0 must be positive")
        if not self.d > 0:
            raise ContractError("d must be positive")
        if not self.epsilon > 0:
            raise ContractError("epsilon must be positive")
        if not 0.0 < self.beta_safety < 1.0:
            raise ContractError("beta_safety must lie in (0, 1)")
        if self.restart_period_K < 1 or self.max_iters < 1:
            raise ContractError("restart_period_K and max_iters must be >= 1")

    @property
    def inner_tol(self):
        if self.subproblem_tol is not None:
            return self.subproblem_tol
        return min(1e-10, self.epsilon ** 2)


@dataclass(frozen=True)
class IterateState:
    x_prev: np.ndarray
    x_cur: np.ndarray
    y_prev: Optional[np.ndarray]
    theta: float
    k: int = 0
    schedule: tuple = (1.0, 1.0)
    iters_since_restart: int = 0


@dataclass
class IterationRecord:
    """Everything logged about iteration ``k`` (the map ``x^k -> x^{k+1}``).

    Vectors and potentials are ``None`` unless full traces are requested.
    ``Q`` is the potential at ``(x^{k+1}, x^k, y^k, theta_{k+1})`` and ``E``
    its convex-case analogue at ``(x^{k+1}, x^k, theta_{k+1})``.
    """

    k: int
    step_norm: float
    beta: float
    theta: float
    theta_next: float
    s_next: float
    violation: float
    objective: float
    restarted: bool
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    x_next: Optional[np.ndarray] = None
    lin_next: Optional[np.ndarray] = None
    Q: Optional[float] = None
    E: Optional[float] = None


@dataclass
class SolveResult:
    x_star: np.ndarray
    theta_final: float
    theta_stabilized_at: Optional[int]
    iterations: int
    termination: str
    L_g: float
    ell_g: float
    trace: List[IterationRecord] = field(default_factory=list)

    @property
    def betas(self):
        return np.array([r.beta for r in self.trace])

    @property
    def step_norms(self):
        return np.array([r.step_norm for r in self.trace])


def next_beta(state, cap, config, restart=False):
    """Extrapolation weight for the current iteration.

    Returns ``(beta, new_state)``; ``new_state`` carries the advanced FISTA
    sequence ``(t_{k}, t_{k+1})`` and restart counter. The schedule is reset
    to ``(1, 1)`` first when ``restart`` is set or the fixed period has
    elapsed. The weight is clamped to ``beta_safety * cap``.
    """
    if not 0.0 < cap <= 1.0:
        raise ContractError("cap must lie in (0, 1]")
    t_prev, t_cur = state.schedule
    count = state.iters_since_restart
    if restart or count >= config.restart_period_K:
        t_prev, t_cur, count = 1.0, 1.0, 0
    beta = (t_prev - 1.0) / t_cur
    t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_cur * t_cur))
    beta = min(beta, config.beta_safety * cap)
    return beta, dataclasses.replace(state, schedule=(t_cur, t_next),
                                     iters_since_restart=count + 1)


def adaptive_restart_fired(y_prev, x_cur, x_prev):
    """True when ``<y_prev - x_cur, x_cur - x_prev>`` is positive."""
    return float(np.dot(y_prev - x_cur, x_cur - x_prev)) > 0.0


def extrapolate(state, beta):
    if not 0.0 <= beta < 1.0:
        raise ContractError("beta must lie in [0, 1)")
    return state.x_cur + beta * (state.x_cur - state.x_prev)


def update_theta(theta, models, x_next, d):
    """Keep ``theta`` if every linearized constraint holds at ``x_next``."""
    if all(lin_g(m, x_next) <= 0.0 for m in models):
        return theta
    return theta + d


def terminated(x_next, x_cur, eps):
    """``||x_next - x_cur|| < eps * max(1, ||x_next||)``."""
    if not eps > 0:
        raise ContractError("eps must be positive")
    return bool(np.linalg.norm(x_next - x_cur)
                < eps * max(1.0, np.linalg.norm(x_next)))


def run(problem, config=None, x0=None):
    """Run ESQM on ``problem`` from ``x0`` (the origin by default).

    Returns a :class:`SolveResult`. Raises :class:`NumericalError` with the
    partial trace attached if an iterate becomes non-finite; subproblem
    failures propagate unchanged.
    """
    from .diagnostics import potential_E, potential_Q

    config = config or SolverConfig()
    n = problem.dimension
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (n,):
        raise ContractError(f"x0 has shape {x.shape}, expected ({n},)")
    if not problem.c_contains(x):
        raise ContractError("x0 must lie in C")
    L_g, ell_g = aggregate_moduli(problem)
    cap = beta_cap(L_g, ell_g)
    single = problem.m == 1
    tol = config.inner_tol

    state = IterateState(x_prev=x.copy(), x_cur=x, y_prev=None,
                         theta=config.theta0)
    trace = []
    last_increase = None
    termination = "max_iters"
    lam = None

    for k in range(config.max_iters):
        restart = (config.adaptive_restart and state.y_prev is not None
                   and adaptive_restart_fired(state.y_prev, state.x_cur,
                                              state.x_prev))
        if config.extrapolate:
            beta, state = next_beta(state, cap, config, restart=restart)
        else:
            beta = 0.0
        y = extrapolate(state, beta)
        xi = problem.p2_subgrad(state.x_cur)
        models = build_models(problem, y)
        theta = state.theta
        if single:
            sol = solve_single(models[0], xi, theta, L_g, y,
                               problem.p1_composite_prox)
        else:
            sol = solve_multi(models, xi, theta, L_g, y,
                              problem.p1_composite_prox, tol=tol, lam0=lam)
            lam = sol.multipliers
        x_next = sol.x_next
        if not np.all(np.isfinite(x_next)):
            raise NumericalError(f"non-finite iterate at k={k}", trace=trace)
        theta_next = update_theta(theta, models, x_next, config.d)
        if theta_next > theta:
            last_increase = k

        rec = IterationRecord(
            k=k,
            step_norm=float(np.linalg.norm(x_next - state.x_cur)),
            beta=beta,
            theta=theta,
            theta_next=theta_next,
            s_next=sol.s_next,
            violation=max_violation(problem, x_next),
            objective=problem.objective(x_next),
            restarted=restart,
        )
        if config.record_trace:
            rec.x, rec.y, rec.x_next = state.x_cur, y, x_next
            rec.lin_next = np.array([lin_g(m, x_next) for m in models])
            rec.Q = potential_Q(x_next, state.x_cur, y, theta_next, problem,
                                L_g=L_g)
            if problem.convex:
                rec.E = potential_E(x_next, state.x_cur, theta_next, problem,
                                    L_g=L_g).value
        trace.append(rec)

        done = terminated(x_next, state.x_cur, config.epsilon)
        state = dataclasses.replace(state, x_prev=state.x_cur, x_cur=x_next,
                                    y_prev=y, theta=theta_next, k=k + 1)
        if done:
            termination = "tolerance_met"
            break

    log.debug("ESQM %s after %d iterations, theta=%g", termination,
              len(trace), state.theta)
    return SolveResult(
        x_star=state.x_cur,
        theta_final=state.theta,
        theta_stabilized_at=last_increase,
        iterations=len(trace),
        termination=termination,
        L_g=L_g,
        ell_g=ell_g,
        trace=trace,
    )
