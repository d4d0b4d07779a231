"""Compressed sensing test problems with l1 - mu*l2 regularization.

Two models share the objective ``||x||_1 - mu ||x||`` and the box
``||x||_inf <= M``; they differ in the data-fit constraint:

* ``quad``:    ``0.5 ||Ax - b||^2 <= sigma`` (Gaussian noise),
* ``lorentz``: ``sum_i log(1 + (Ax - b)_i^2 / gamma^2) <= sigma``
  (Cauchy noise).

Random streams
--------------
Instances are drawn with ``numpy.random.default_rng`` (PCG64). The seed is
expanded by ``numpy.random.SeedSequence(seed).spawn(4)`` into independent
child streams used, in order, for the sensing matrix, the support, the
values of ``x_orig`` and the noise. Gaussian variates come from
``Generator.standard_normal`` (ziggurat); Cauchy noise is
``tan(pi (u - 1/2))`` with ``u = Generator.random``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import solve_triangular

from .problem import (
    AccuracyError,
    ContractError,
    NumericalError,
    ProblemSpec,
    SmoothConstraint,
)

__all__ = [
    "CsInstance",
    "gen_gaussian_instance",
    "gen_cauchy_instance",
    "reference_scale",
    "qr_of_transpose",
    "least_norm_from_qr",
    "least_norm_solution",
    "compute_M",
    "spectral_norm_sq",
    "lorentzian_norm",
    "quad_constraint",
    "lorentz_constraint",
    "soft_threshold",
    "l1_box_sprox",
    "l2_subgrad",
    "make_cs_problem",
    "metrics",
    "lorentz_second_derivative_split",
    "verify_lorentz_dc_split",
    "save_instance",
    "load_instance",
]


@dataclass(frozen=True)
class CsInstance:
    """A generated compressed sensing instance.

    ``sigma1`` is set for Gaussian instances and ``gamma`` for Cauchy ones.
    ``M`` is left unset by the generators; :func:`make_cs_problem` derives it
    from ``mu`` when the problem is built.
    """

    A: np.ndarray
    b: np.ndarray
    x_orig: np.ndarray
    support: np.ndarray
    sigma: float
    noise_kind: str
    seed: int
    mu: float = 0.95
    sigma1: Optional[float] = None
    gamma: Optional[float] = None
    M: Optional[float] = None

    @property
    def shape(self):
        q, n = self.A.shape
        return q, n, int(self.support.size)

    @property
    def model(self):
        return "quad" if self.noise_kind == "gaussian" else "lorentz"


def reference_scale(i, model="quad"):
    """``(q, n, k)`` used in the experiments for scale index ``i``."""
    k = 160 * i if model == "quad" else 80 * i
    return 720 * i, 2560 * i, k


def _streams(seed):
    return [np.random.default_rng(s)
            for s in np.random.SeedSequence(seed).spawn(4)]


def _sensing_data(q, n, k, seed):
    if not 0 < k <= n:
        raise ContractError(f"need 0 < k <= n, got k={k}, n={n}")
    if q < 1:
        raise ContractError("q must be positive")
    rng_A, rng_T, rng_x, rng_noise = _streams(seed)
    A = rng_A.standard_normal((q, n))
    A /= np.linalg.norm(A, axis=0)
    support = np.sort(rng_T.choice(n, size=k, replace=False))
    x_orig = np.zeros(n)
    x_orig[support] = rng_x.standard_normal(k)
    return A, support, x_orig, rng_noise


def gen_gaussian_instance(q, n, k, seed, mu=0.95):
    """Random instance of the quadratic model with Gaussian noise.

    ``b = A x_orig + 0.01 * noise`` and ``sigma = 0.5 * sigma1**2`` with
    ``sigma1 = 1.1 * ||0.01 * noise||``.
    """
    A, support, x_orig, rng = _sensing_data(q, n, k, seed)
    noise = 0.01 * rng.standard_normal(q)
    b = A @ x_orig + noise
    sigma1 = 1.1 * float(np.linalg.norm(noise))
    sigma = 0.5 * sigma1 ** 2
    if not 0.0 < sigma < 0.5 * float(b @ b):
        raise NumericalError("origin is feasible for this draw")
    return CsInstance(A=A, b=b, x_orig=x_orig, support=support, sigma=sigma,
                      noise_kind="gaussian", seed=seed, mu=mu, sigma1=sigma1)


def gen_cauchy_instance(q, n, k, seed, gamma=0.08, mu=0.95, max_redraws=100):
    """Random instance of the Lorentzian model with Cauchy noise.

    ``sigma = 1.05 * ||0.01 * noise||_{LL2,gamma}``. If the origin happens
    to be feasible the noise is redrawn from the same stream.
    """
    if not gamma > 0:
        raise ContractError("gamma must be positive")
    A, support, x_orig, rng = _sensing_data(q, n, k, seed)
    clean = A @ x_orig
    for _ in range(max_redraws):
        noise = 0.01 * np.tan(np.pi * (rng.random(q) - 0.5))
        b = clean + noise
        sigma = 1.05 * lorentzian_norm(noise, gamma)
        if 0.0 < sigma < lorentzian_norm(-b, gamma):
            return CsInstance(A=A, b=b, x_orig=x_orig, support=support,
                              sigma=sigma, noise_kind="cauchy", seed=seed,
                              mu=mu, gamma=gamma)
    raise NumericalError("could not draw an instance with infeasible origin")


# -- dense linear algebra -----------------------------------------------------

def qr_of_transpose(A):
    """Householder QR of ``A.T`` in economic form, ``A.T = Q R``."""
    Q, R = np.linalg.qr(A.T, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.size and diag.min() <= 1e-12 * max(diag.max(), 1.0):
        raise NumericalError("A is numerically rank deficient")
    return Q, R


def least_norm_from_qr(Q, R, b):
    """``A^+ b`` from the factors of ``A.T``: ``Q @ solve(R.T, b)``."""
    return Q @ solve_triangular(R, b, trans="T", lower=False)


def least_norm_solution(A, b):
    """Minimum-norm solution of the underdetermined system ``Ax = b``."""
    A = np.asarray(A, dtype=float)
    if A.shape[0] > A.shape[1]:
        raise ContractError("A must have at least as many columns as rows")
    Q, R = qr_of_transpose(A)
    return least_norm_from_qr(Q, R, np.asarray(b, dtype=float))


def compute_M(adagb, mu):
    """Box radius ``(||x||_1 - mu ||x||) / (1 - mu)`` at ``x = A^+ b``."""
    if not 0.0 <= mu < 1.0:
        raise ContractError("mu must lie in [0, 1)")
    adagb = np.asarray(adagb, dtype=float)
    return (np.abs(adagb).sum() - mu * np.linalg.norm(adagb)) / (1.0 - mu)


def spectral_norm_sq(A, tol=1e-10, max_iter=100_000, seed=0):
    """Largest eigenvalue of ``A A^T`` by power iteration.

    Each step applies ``A.T`` then ``A``. Iteration stops when the Rayleigh
    quotient changes by at most ``tol`` relative to its value.
    """
    if not tol > 0:
        raise ContractError("tol must be positive")
    A = np.asarray(A, dtype=float)
    v = np.random.default_rng(seed).standard_normal(A.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A @ (A.T @ v)
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    raise AccuracyError(f"power iteration did not converge in {max_iter} "
                        "steps", best=lam)


# -- constraints ---------------------------------------------------------------

def lorentzian_norm(r, gamma):
    """``sum_i log(1 + r_i^2 / gamma^2)``."""
    r = np.asarray(r, dtype=float)
    return float(np.log1p((r / gamma) ** 2).sum())


def quad_constraint(A, b, sigma, norm_sq=None):
    """``g(x) = 0.5 ||Ax - b||^2 - sigma`` with moduli ``(||A||^2, 0)``."""
    if not sigma > 0:
        raise ContractError("sigma must be positive")
    if norm_sq is None:
        norm_sq = spectral_norm_sq(A)

    def g(x):
        r = A @ x - b
        return 0.5 * float(r @ r) - sigma

    def grad(x):
        return A.T @ (A @ x - b)

    return SmoothConstraint(eval=g, grad=grad, modulus_L=norm_sq,
                            modulus_ell=0.0)


def lorentz_constraint(A, b, sigma, gamma, norm_sq=None):
    """Lorentzian data fit ``||Ax - b||_{LL2,gamma} - sigma``.

    The moduli ``2||A||^2/gamma^2`` and ``||A||^2/(4 gamma^2)`` come from
    splitting ``log(1 + t^2)`` into convex parts with curvature at most 2
    and 1/4 (see :func:`verify_lorentz_dc_split`).
    """
    if not sigma > 0:
        raise ContractError("sigma must be positive")
    if not gamma > 0:
        raise ContractError("gamma must be positive")
    if norm_sq is None:
        norm_sq = spectral_norm_sq(A)
    g2 = gamma * gamma

    def g(x):
        return lorentzian_norm(A @ x - b, gamma) - sigma

    def grad(x):
        r = A @ x - b
        return A.T @ (2.0 * r / (g2 + r * r))

    return SmoothConstraint(eval=g, grad=grad, modulus_L=2.0 * norm_sq / g2,
                            modulus_ell=norm_sq / (4.0 * g2))


# -- objective pieces ------------------------------------------------------------

def soft_threshold(t, tau):
    return np.sign(t) * np.maximum(np.abs(t) - tau, 0.0)


def l1_box_sprox(v, z, rho, M):
    """Minimizer of ``||x||_1 + <v, x> + (rho/2)||x - z||^2`` over the box.

    The problem separates by coordinate, and each scalar problem is convex,
    so clipping the unconstrained soft-threshold solution is exact.
    """
    return np.clip(soft_threshold(z - v / rho, 1.0 / rho), -M, M)


def l2_subgrad(x, mu):
    """Element of the subdifferential of ``mu ||x||``; zero near the origin."""
    nx = np.linalg.norm(x)
    if nx > 1e-12 * np.sqrt(x.size):
        return (mu / nx) * x
    return np.zeros_like(x)


def make_cs_problem(instance, kind=None, norm_sq=None, adagb=None):
    """Build the :class:`ProblemSpec` of a compressed sensing instance.

    ``norm_sq`` (``||A||^2``) and ``adagb`` (``A^+ b``) are computed when not
    given. Both are lower bounds zero: ``0`` lies in C and
    ``||x||_1 >= mu ||x||`` when ``mu <= 1``.
    """
    kind = kind or instance.model
    if kind != instance.model:
        raise ContractError(f"instance has {instance.noise_kind} noise; "
                            f"model {kind!r} does not apply")
    A, b, mu = instance.A, instance.b, instance.mu
    n = A.shape[1]
    if norm_sq is None:
        norm_sq = spectral_norm_sq(A)
    if adagb is None:
        adagb = least_norm_solution(A, b)
    M = instance.M if instance.M is not None else compute_M(adagb, mu)
    if kind == "quad":
        con = quad_constraint(A, b, instance.sigma, norm_sq=norm_sq)
    else:
        con = lorentz_constraint(A, b, instance.sigma, instance.gamma,
                                 norm_sq=norm_sq)
    tol = 1e-12 * max(M, 1.0)

    return ProblemSpec(
        p1_eval=lambda x: float(np.abs(x).sum()),
        p1_composite_prox=lambda v, z, rho: l1_box_sprox(v, z, rho, M),
        p2_eval=lambda x: mu * float(np.linalg.norm(x)),
        p2_subgrad=lambda x: l2_subgrad(x, mu),
        constraints=(con,),
        c_project=lambda x: np.clip(x, -M, M),
        c_contains=lambda x: bool(np.max(np.abs(x)) <= M + tol),
        p_lower_bound=0.0,
        p1_lower_bound=0.0,
        dimension=n,
        convex=(kind == "quad" and mu == 0.0),
        name=f"cs-{kind}",
    )


def metrics(x_star, instance):
    """Recovery error and relative constraint residual of a solution."""
    rec = (np.linalg.norm(x_star - instance.x_orig)
           / max(1.0, np.linalg.norm(instance.x_orig)))
    r = instance.A @ x_star - instance.b
    if instance.noise_kind == "gaussian":
        s1sq = instance.sigma1 ** 2
        residual = (float(r @ r) - s1sq) / s1sq
    else:
        residual = ((lorentzian_norm(r, instance.gamma) - instance.sigma)
                    / instance.sigma)
    return float(rec), float(residual)


# -- the Lorentzian DC split -----------------------------------------------------

def lorentz_second_derivative_split(t):
    """Positive and negative parts of ``d^2/dt^2 log(1 + t^2)``."""
    t = np.asarray(t, dtype=float)
    curv = 2.0 * (1.0 - t * t) / (1.0 + t * t) ** 2
    return np.maximum(curv, 0.0), np.maximum(-curv, 0.0)


@dataclass
class DCSplitReport:
    """Outcome of :func:`verify_lorentz_dc_split`.

    Curvature ranges are in the unscaled variable ``t``; ``scaled_moduli``
    are the gradient moduli of ``y -> r1(y/gamma)`` and ``y -> r2(y/gamma)``.
    """

    gamma: float
    identity_error: float
    r1_curvature_range: tuple
    r2_curvature_range: tuple
    r2_sup: float
    scaled_moduli: tuple
    worst_violation: float = 0.0

    @property
    def passed(self):
        return self.worst_violation == 0.0


def verify_lorentz_dc_split(gamma=1.0, grid=None, step=1e-4):
    """Check numerically that ``log(1 + t^2) = r1(t) - r2(t)``.

    ``r1`` and ``r2`` are obtained by integrating the positive and negative
    parts of the second derivative twice from ``t = 0`` with the trapezoid
    rule (spacing ``step``), which also pins ``r(0) = r'(0) = 0``. The
    curvature bounds 2 and 1/4 are checked on ``grid``, and for the scaled
    functions ``y -> r(y / gamma)`` the bounds ``2/gamma^2`` and
    ``1/(4 gamma^2)``.
    """
    if not gamma > 0:
        raise ContractError("gamma must be positive")
    if grid is None:
        grid = np.linspace(-10.0, 10.0, 20001)
    grid = np.asarray(grid, dtype=float)
    if grid.min() > -10.0 or grid.max() < 10.0:
        raise ContractError("grid must cover [-10, 10]")
    T = max(abs(grid.min()), abs(grid.max()))
    half = np.arange(0.0, T + step / 2, step)
    errs = []
    for sgn in (1.0, -1.0):
        t = sgn * half
        c1, c2 = lorentz_second_derivative_split(t)
        r1 = cumulative_trapezoid(cumulative_trapezoid(c1, t, initial=0.0),
                                  t, initial=0.0)
        r2 = cumulative_trapezoid(cumulative_trapezoid(c2, t, initial=0.0),
                                  t, initial=0.0)
        errs.append(np.max(np.abs(r1 - r2 - np.log1p(t * t))))
    c1, c2 = lorentz_second_derivative_split(grid)
    g2 = gamma * gamma
    k1, k2 = float(c1.max()) / g2, float(c2.max()) / g2
    rep = DCSplitReport(
        gamma=gamma,
        identity_error=float(max(errs)),
        r1_curvature_range=(float(c1.min()), float(c1.max())),
        r2_curvature_range=(float(c2.min()), float(c2.max())),
        r2_sup=float(c2.max()),
        scaled_moduli=(k1, k2),
    )
    lo1, hi1 = rep.r1_curvature_range
    lo2, hi2 = rep.r2_curvature_range
    rep.worst_violation = max(rep.identity_error - 1e-6, -lo1, hi1 - 2.0,
                              -lo2, hi2 - 0.25, k1 - 2.0 / g2 * (1 + 1e-15),
                              k2 - 0.25 / g2 * (1 + 1e-15), 0.0)
    return rep


# -- persistence -------------------------------------------------------------------

def save_instance(path, instance):
    """Write an instance to an ``.npz`` container; optional fields as NaN."""
    data = {}
    for f in fields(instance):
        val = getattr(instance, f.name)
        data[f.name] = np.asarray(np.nan if val is None else val)
    np.savez(path, **data)


def load_instance(path):
    with np.load(path, allow_pickle=False) as z:
        kw = {}
        for f in fields(CsInstance):
            arr = z[f.name]
            if arr.ndim == 0:
                val = arr.item()
                if f.name in ("sigma1", "gamma", "M") and np.isnan(val):
                    val = None
                kw[f.name] = val
            else:
                kw[f.name] = arr
    return CsInstance(**kw)
