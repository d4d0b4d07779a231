"""Potential functions and post-hoc audits of ESQM runs.

``Q`` is the merit function whose descent along the iterates drives the
convergence analysis of the extrapolated method; ``E`` is its counterpart
when P2 vanishes and the constraints are convex; ``F_eta`` is the exact
penalty function whose KL exponent governs the local rate in that setting.
The audits recompute these along a recorded trace and report the worst
slack of the descent inequalities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .problem import (
    ContractError,
    aggregate_moduli,
    build_models,
    max_violation,
)
from .subproblem import solve

__all__ = [
    "DomainValue",
    "DescentAuditReport",
    "CriticalityReport",
    "potential_Q",
    "potential_E",
    "penalty_F",
    "audit_descent",
    "criticality_report",
    "fit_linear_rate",
]


class DomainValue(NamedTuple):
    """A potential value with a flag for points outside C (value ``inf``)."""

    value: float
    in_domain: bool


def _L(problem, L_g):
    return aggregate_moduli(problem)[0] if L_g is None else L_g


def potential_Q(x, y, z, theta, problem, L_g=None):
    """``(P(x) - m)/theta + max_i [lin_i(x; z)]_+ + L/2 (|x-y|^2 + |x-z|^2)``.

    ``m`` is the stored lower bound of P over C.
    """
    if not theta > 0:
        raise ContractError("theta must be positive")
    L_g = _L(problem, L_g)
    lin = max(float(mod.slope @ x) + mod.offset
              for mod in build_models(problem, z))
    dy, dz = x - y, x - z
    return ((problem.objective(x) - problem.p_lower_bound) / theta
            + max(lin, 0.0)
            + 0.5 * L_g * (float(dy @ dy) + float(dz @ dz)))


def potential_E(x, x_prev, theta, problem, L_g=None):
    """Convex-case potential; returns a :class:`DomainValue`."""
    if not theta > 0:
        raise ContractError("theta must be positive")
    if not problem.c_contains(x):
        return DomainValue(np.inf, False)
    L_g = _L(problem, L_g)
    d = x - x_prev
    val = ((problem.p1_eval(x) - problem.p1_lower_bound) / theta
           + max_violation(problem, x) + 0.5 * L_g * float(d @ d))
    return DomainValue(val, True)


def penalty_F(x, eta, problem):
    """Exact penalty function ``(P1(x) - m1)/eta + max_i [g_i(x)]_+`` on C."""
    if not eta > 0:
        raise ContractError("eta must be positive")
    if not problem.c_contains(x):
        return DomainValue(np.inf, False)
    val = ((problem.p1_eval(x) - problem.p1_lower_bound) / eta
           + max_violation(problem, x))
    return DomainValue(val, True)


@dataclass
class DescentAuditReport:
    """Worst slacks of the descent inequalities along a trace.

    A slack is the right-hand side minus the left-hand side, so negative
    values are violations. ``worst_Q_margin`` covers iterations from
    ``theta_stable_from`` on; ``worst_Q_margin_all`` covers every ``k >= 1``.
    Margins are ``+inf`` when nothing was checked.
    """

    worst_Q_margin: float
    worst_Q_margin_all: float
    worst_E_margin: float
    n_checked: int
    theta_stable_from: int
    Q0: float
    E0: Optional[float]
    Q_values: np.ndarray
    E_values: Optional[np.ndarray]

    def passed(self, rel=1e-8):
        ok = self.worst_Q_margin >= -rel * (1.0 + abs(self.Q0))
        if self.E0 is not None:
            ok = ok and self.worst_E_margin >= -rel * (1.0 + abs(self.E0))
        return ok

    def as_records(self):
        return {
            "worst_Q_margin": self.worst_Q_margin,
            "worst_Q_margin_all": self.worst_Q_margin_all,
            "worst_E_margin": self.worst_E_margin,
            "n_checked": self.n_checked,
            "theta_stable_from": self.theta_stable_from,
            "Q0": self.Q0,
            "E0": self.E0,
        }

    def to_text(self):
        return "\n".join(f"{k}: {v}" for k, v in self.as_records().items())


def audit_descent(trace, problem, L_g=None, ell_g=None):
    """Recheck the Q (and, for convex problems, E) descent inequalities.

    For record ``k`` (mapping ``x^k`` to ``x^{k+1}``) with ``k >= 1``:

        Q_k - Q_{k-1} <= -(1 - (L+ell)/L * beta_k^2) * L/2 * |x^k - x^{k-1}|^2
        E_k - E_{k-1} <= -(1 - beta_k^2) * L/2 * |x^k - x^{k-1}|^2

    where ``Q_k = Q(x^{k+1}, x^k, y^k, theta_{k+1})`` and
    ``E_k = E(x^{k+1}, x^k, theta_{k+1})``, all recomputed from the stored
    vectors.
    """
    if trace and trace[0].x is None:
        raise ContractError("trace lacks full iterates; rerun with "
                            "record_trace=True")
    if L_g is None or ell_g is None:
        L_g, ell_g = aggregate_moduli(problem)
    Qs = np.array([potential_Q(r.x_next, r.x, r.y, r.theta_next, problem,
                               L_g=L_g) for r in trace])
    Es = None
    if problem.convex:
        Es = np.array([potential_E(r.x_next, r.x, r.theta_next, problem,
                                   L_g=L_g).value for r in trace])
    increases = [r.k for r in trace if r.theta_next > r.theta]
    stable_from = increases[-1] + 1 if increases else 0

    worst_Q = worst_Q_all = worst_E = np.inf
    n = 0
    for k in range(1, len(trace)):
        r = trace[k]
        dx = r.x - trace[k - 1].x
        dsq = float(dx @ dx)
        b2 = r.beta ** 2
        slack_Q = (-(1.0 - (L_g + ell_g) / L_g * b2) * 0.5 * L_g * dsq
                   - (Qs[k] - Qs[k - 1]))
        worst_Q_all = min(worst_Q_all, slack_Q)
        if k >= stable_from:
            worst_Q = min(worst_Q, slack_Q)
        if Es is not None:
            slack_E = -(1.0 - b2) * 0.5 * L_g * dsq - (Es[k] - Es[k - 1])
            worst_E = min(worst_E, slack_E)
        n += 1
    return DescentAuditReport(
        worst_Q_margin=float(worst_Q),
        worst_Q_margin_all=float(worst_Q_all),
        worst_E_margin=float(worst_E),
        n_checked=n,
        theta_stable_from=stable_from,
        Q0=float(Qs[0]) if len(Qs) else 0.0,
        E0=float(Es[0]) if Es is not None and len(Es) else None,
        Q_values=Qs,
        E_values=Es,
    )


@dataclass
class CriticalityReport:
    feasibility: float
    complementarity: float
    stationarity: float
    multipliers: np.ndarray

    def as_records(self):
        return {"feasibility": self.feasibility,
                "complementarity": self.complementarity,
                "stationarity": self.stationarity}

    def to_text(self):
        return "\n".join(f"{k}: {v:.6e}" for k, v in self.as_records().items())


def criticality_report(x_star, problem, theta_final, L_g=None, tol=1e-12):
    """Feasibility, complementarity and fixed-point residual at ``x_star``.

    Solves one subproblem without extrapolation anchored at ``x_star``; a
    critical point is a fixed point of that map.
    """
    if not problem.c_contains(x_star):
        raise ContractError("x_star must lie in C")
    L_g = _L(problem, L_g)
    xi = problem.p2_subgrad(x_star)
    models = build_models(problem, x_star)
    sol = solve(models, xi, theta_final, L_g, x_star,
                problem.p1_composite_prox, tol=tol)
    g = problem.constraint_values(x_star)
    return CriticalityReport(
        feasibility=max_violation(problem, x_star),
        complementarity=float(np.sum(sol.multipliers * np.abs(g))),
        stationarity=float(np.linalg.norm(sol.x_next - x_star)),
        multipliers=sol.multipliers,
    )


def fit_linear_rate(trace, x_star, tail=None):
    """Least-squares geometric rate of ``|x^k - x_star|`` over a trace.

    Returns the fitted ratio ``r`` in ``|x^k - x_star| ~ c r^k``. Purely
    descriptive; the constant in the theory is not observable.
    """
    errs = np.array([np.linalg.norm(r.x - x_star) for r in trace
                     if r.x is not None])
    if tail is not None:
        errs = errs[-tail:]
    keep = errs > 0
    if keep.sum() < 2:
        return float("nan")
    k = np.arange(errs.size)[keep]
    slope = np.polyfit(k, np.log(errs[keep]), 1)[0]
    return float(np.exp(slope))
