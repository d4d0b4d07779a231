"""Solvers for the strongly convex subproblem of one ESQM iteration.

Each iteration minimizes, over x in C,

    P1(x) - <xi, x> + theta * max_i [l_i(x)]_+ + (theta L_g / 2)||x - y||^2

where ``l_i`` are affine models of the constraints anchored at ``y``. The
hinge term is dualized as ``theta [u]_+ = max_{0 <= lam <= theta} lam u``
(or its scaled simplex version when m > 1), so that for a fixed multiplier
the inner minimization is a single call of the composite prox of P1 over C.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .problem import AccuracyError, ContractError, NumericalError

__all__ = [
    "SubproblemSolution",
    "SubproblemData",
    "solve_single",
    "solve_multi",
    "solve",
    "projection_simplex_slack",
    "subproblem_objective",
    "dual_objective",
    "brute_force_subproblem",
]


@dataclass(frozen=True)
class SubproblemSolution:
    """Minimizer of one subproblem together with its dual certificate.

    Attributes
    ----------
    x_next : ndarray
        The unique minimizer.
    s_next : float
        ``max_i [l_i(x_next)]_+``, the optimal epigraph variable.
    multipliers : ndarray
        Hinge multipliers, nonnegative with sum at most ``theta``.
    gap : float
        Primal objective at ``x_next`` minus the dual objective at
        ``multipliers``.
    iterations : int
        Bisection steps or dual ascent iterations used.
    """

    x_next: np.ndarray
    s_next: float
    multipliers: np.ndarray
    gap: float
    iterations: int = 0


def _stack(models):
    S = np.vstack([m.slope for m in models])
    c = np.array([m.offset for m in models], dtype=float)
    return S, c


def _check_finite(x, what):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite {what}")
    return x


def solve_single(model, xi, theta, L_g, y, prox, split=0.5):
    """Solve the subproblem with a single constraint by dual bisection.

    For a fixed multiplier ``lam`` the minimizer is
    ``x(lam) = prox(-xi + lam * slope, y, theta * L_g)`` and the derivative
    of the concave dual function is ``slope @ x(lam) + offset``, which is
    nonincreasing in ``lam``. Bisection runs on ``[0, theta]`` until the
    bracket is narrower than ``1e-12 * max(1, theta)``.

    The returned point is ``x(hi)`` where ``hi`` is the right end of the
    final bracket. Its linearized constraint value is therefore ``<= 0`` as
    computed, so an interior multiplier never triggers a penalty increase
    through rounding.

    Parameters
    ----------
    split : float, optional
        Fraction of the bracket at which each trial point is placed.
        Any value in (0, 1) gives the same answer to tolerance.
    """
    if not theta > 0:
        raise ContractError("theta must be positive")
    if not L_g > 0:
        raise ContractError("L_g must be positive")
    if not 0.0 < split < 1.0:
        raise ContractError("split must lie in (0, 1)")
    a = model.slope
    c = model.offset
    xi = np.asarray(xi, dtype=float)
    y = np.asarray(y, dtype=float)
    rho = theta * L_g

    def x_of(lam):
        return _check_finite(prox(lam * a - xi, y, rho), "prox output")

    def dphi(x):
        return float(a @ x) + c

    scale = 1e-9 * (1.0 + abs(c) + float(np.abs(a) @ np.abs(y)))
    x0 = x_of(0.0)
    d0 = dphi(x0)
    if d0 <= 0.0:
        lam, x, nit = 0.0, x0, 0
    else:
        xt = x_of(theta)
        dt = dphi(xt)
        if dt > d0 + scale:
            raise ContractError(
                "dual derivative increases; the prox oracle does not solve "
                "the inner problem")
        if dt >= 0.0:
            lam, x, nit = theta, xt, 0
        else:
            lo, hi, x_hi = 0.0, theta, xt
            d_lo, d_hi = d0, dt
            width = 1e-12 * max(1.0, theta)
            nit = 0
            while hi - lo > width:
                mid = lo + split * (hi - lo)
                if not lo < mid < hi:
                    break
                xm = x_of(mid)
                dm = dphi(xm)
                if dm > d_lo + scale or dm < d_hi - scale:
                    raise ContractError(
                        "dual derivative is not monotone; the prox oracle "
                        "does not solve the inner problem")
                if dm > 0.0:
                    lo, d_lo = mid, dm
                else:
                    hi, d_hi, x_hi = mid, dm, xm
                nit += 1
            lam, x = hi, x_hi
    ell = dphi(x)
    s = max(ell, 0.0)
    gap = max(theta * s - lam * ell, 0.0)
    return SubproblemSolution(x_next=x, s_next=s, multipliers=np.array([lam]),
                              gap=gap, iterations=nit)


def projection_simplex_slack(lam, theta):
    """Euclidean projection onto ``{lam >= 0, sum(lam) <= theta}``."""
    if not theta > 0:
        raise ContractError("theta must be positive")
    lam = np.asarray(lam, dtype=float)
    p = np.maximum(lam, 0.0)
    if p.sum() <= theta:
        return p
    # projection onto the face sum(lam) == theta
    u = np.sort(lam)[::-1]
    css = np.cumsum(u) - theta
    idx = np.arange(1, lam.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(lam - tau, 0.0)


def solve_multi(models, xi, theta, L_g, y, prox, tol=1e-10, lam0=None,
                max_iter=100_000, restart_every=100):
    """Solve the subproblem with any number of constraints by dual ascent.

    The dual function ``phi(lam) = min_x L(x, lam)`` is concave and smooth
    with gradient ``S @ x(lam) + c`` (``S`` stacks the slopes) and gradient
    Lipschitz constant ``||S||^2 / (theta L_g)``. It is maximized by
    accelerated projected gradient over ``{lam >= 0, sum(lam) <= theta}``,
    with momentum reset every ``restart_every`` iterations or when the dual
    value decreases, until the duality gap at ``x(lam)`` is at most ``tol``.

    Raises
    ------
    AccuracyError
        If ``max_iter`` iterations do not reach ``tol``. The best solution
        found is attached as ``err.best``.
    """
    if not theta > 0:
        raise ContractError("theta must be positive")
    if not L_g > 0:
        raise ContractError("L_g must be positive")
    if not tol > 0:
        raise ContractError("tol must be positive")
    S, c = _stack(models)
    xi = np.asarray(xi, dtype=float)
    y = np.asarray(y, dtype=float)
    rho = theta * L_g
    m = len(models)

    def x_of(lam):
        return _check_finite(prox(S.T @ lam - xi, y, rho), "prox output")

    def certificate(lam, x):
        ell = S @ x + c
        worst = max(float(ell.max()), 0.0)
        return max(theta * worst - float(lam @ ell), 0.0), ell

    lip = np.linalg.norm(S, 2) ** 2 / rho
    if lip == 0.0:
        # constant models: the hinge is either off or saturated on the max
        lam = np.zeros(m)
        if c.max() > 0:
            lam[int(np.argmax(c))] = theta
        x = x_of(lam)
        gap, ell = certificate(lam, x)
        return SubproblemSolution(x, max(float(ell.max()), 0.0), lam, gap, 0)
    step = 1.0 / lip

    lam = (np.zeros(m) if lam0 is None
           else projection_simplex_slack(lam0, theta))
    x = x_of(lam)
    gap, ell = certificate(lam, x)
    best = (gap, lam, x, ell)
    if gap <= tol:
        return SubproblemSolution(x, max(float(ell.max()), 0.0), lam, gap, 0)

    z, t, lam_prev, ell_z = lam, 1.0, lam, ell
    it = 0
    for it in range(1, max_iter + 1):
        lam_new = projection_simplex_slack(z + step * ell_z, theta)
        x = x_of(lam_new)
        gap, ell = certificate(lam_new, x)
        if gap < best[0]:
            best = (gap, lam_new, x, ell)
        if gap <= tol:
            lam = lam_new
            break
        # restart on a schedule or when the step opposes the ascent direction
        if it % restart_every == 0 or ell_z @ (lam_new - lam_prev) < 0:
            t, z, ell_z = 1.0, lam_new, ell
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = lam_new + ((t - 1.0) / t_next) * (lam_new - lam_prev)
            t = t_next
            ell_z = S @ x_of(z) + c
        lam_prev = lam_new
    else:
        gap, lam, x, ell = best
        sol = SubproblemSolution(x, max(float(ell.max()), 0.0), lam, gap, it)
        raise AccuracyError(
            f"dual ascent stopped after {max_iter} iterations with gap "
            f"{gap:.3e} > {tol:.3e}", best=sol)
    return SubproblemSolution(x, max(float(ell.max()), 0.0), lam, gap, it)


def solve(models, xi, theta, L_g, y, prox, tol=1e-10):
    """Dispatch to :func:`solve_single` or :func:`solve_multi`."""
    if len(models) == 1:
        return solve_single(models[0], xi, theta, L_g, y, prox)
    return solve_multi(models, xi, theta, L_g, y, prox, tol=tol)


def subproblem_objective(x, models, xi, theta, L_g, y, p1_eval):
    """Primal objective of the reduced subproblem (C is not checked)."""
    ell = max(max(float(m.slope @ x) + m.offset for m in models), 0.0)
    return (p1_eval(x) - float(xi @ x) + theta * ell
            + 0.5 * theta * L_g * float((x - y) @ (x - y)))


def dual_objective(lam, models, xi, theta, L_g, y, prox, p1_eval):
    """Dual function value ``min_{x in C} L(x, lam)`` evaluated through prox."""
    S, c = _stack(models)
    lam = np.asarray(lam, dtype=float)
    x = prox(S.T @ lam - xi, y, theta * L_g)
    return (p1_eval(x) - float(xi @ x) + float(lam @ (S @ x + c))
            + 0.5 * theta * L_g * float((x - y) @ (x - y)))


@dataclass(frozen=True)
class SubproblemData:
    """A small subproblem with ``P1 = l1_weight * ||x||_1`` and a box C.

    Only used to drive :func:`brute_force_subproblem`.
    """

    models: list
    xi: np.ndarray
    theta: float
    L_g: float
    y: np.ndarray
    box_radius: float = 1.0
    l1_weight: float = 1.0

    def objective(self, X):
        """Objective at each row of ``X`` (shape ``(N, n)``)."""
        X = np.atleast_2d(X)
        S, c = _stack(self.models)
        hinge = np.maximum((X @ S.T + c).max(axis=1), 0.0)
        d = X - self.y
        return (self.l1_weight * np.abs(X).sum(axis=1) - X @ self.xi
                + self.theta * hinge
                + 0.5 * self.theta * self.L_g * np.einsum("ij,ij->i", d, d))

    def p1_eval(self, x):
        return self.l1_weight * float(np.abs(x).sum())


def _golden_section(f, lo, hi, xtol):
    """Minimize a convex scalar function on ``[lo, hi]``; returns ``(t, f(t))``."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    cands = [(fc, c), (fd, d), (f(a), a), (f(b), b)]
    fbest, tbest = min(cands)
    return tbest, fbest


def _nested_minimize(obj, n, M, xtol):
    """Global minimizer of a convex ``obj`` over ``[-M, M]^n`` by nesting.

    Partial minimization of a jointly convex function over trailing
    coordinates leaves a convex function of the leading ones, so a
    golden-section search per coordinate is globally valid.
    """
    def inner(prefix):
        if len(prefix) == n - 1:
            t, val = _golden_section(lambda t: obj(np.array([*prefix, t])),
                                     -M, M, xtol)
            return val, [*prefix, t]
        t, _ = _golden_section(lambda t: inner([*prefix, t])[0], -M, M, xtol)
        return inner([*prefix, t])

    return np.array(inner([])[1])


def brute_force_subproblem(data, resolution=1e-2, xtol=None):
    """Estimate the subproblem minimizer without using any solver here.

    The objective is evaluated on a grid of spacing ``resolution`` over the
    box; then nested golden-section searches (one per coordinate, each to
    bracket width ``xtol``) minimize it over the whole box. The better of
    the two points is returned. Intended as a test oracle for ``n <= 3``.
    """
    n = data.y.size
    if n > 3:
        raise ContractError("brute force supports n <= 3 only")
    M = data.box_radius
    xtol = 1e-11 * M if xtol is None else xtol
    pts = int(np.ceil(2 * M / resolution)) + 1
    axis = np.linspace(-M, M, pts)
    grid = np.stack(np.meshgrid(*([axis] * n), indexing="ij"),
                    axis=-1).reshape(-1, n)
    vals = data.objective(grid)
    grid_best = grid[int(np.argmin(vals))]

    def obj(x):
        return float(data.objective(x)[0])

    polished = _nested_minimize(obj, n, M, xtol)
    return polished if obj(polished) <= obj(grid_best) else grid_best
