import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from esqm import cs
from esqm.problem import ContractError, NumericalError, beta_cap
from esqm.subproblem import SubproblemData, brute_force_subproblem
from esqm.problem import AffineModel


# -- instance generation ------------------------------------------------------------

def test_gaussian_instance_construction(quad_instance):
    inst = quad_instance
    q, n, k = inst.shape
    assert (q, n, k) == (72, 256, 16)
    np.testing.assert_allclose(np.linalg.norm(inst.A, axis=0), 1.0, atol=1e-12)
    off = np.setdiff1d(np.arange(n), inst.support)
    assert np.all(inst.x_orig[off] == 0) and inst.support.size == k
    noise_norm = np.linalg.norm(inst.b - inst.A @ inst.x_orig)
    assert noise_norm == pytest.approx(inst.sigma1 / 1.1, rel=1e-12)
    assert inst.sigma == pytest.approx(0.5 * inst.sigma1 ** 2)
    assert 0 < inst.sigma < 0.5 * inst.b @ inst.b


def test_least_norm_point_is_strictly_feasible(quad_instance, quad_problem):
    x = cs.least_norm_solution(quad_instance.A, quad_instance.b)
    g = quad_problem.constraints[0].eval(x)
    assert g == pytest.approx(-quad_instance.sigma, abs=1e-12)
    assert g < 0


def test_instances_are_reproducible():
    a = cs.gen_gaussian_instance(30, 60, 5, seed=11)
    b = cs.gen_gaussian_instance(30, 60, 5, seed=11)
    for f in ("A", "b", "x_orig", "support"):
        np.testing.assert_array_equal(getattr(a, f), getattr(b, f))
    assert a.sigma == b.sigma
    c = cs.gen_gaussian_instance(30, 60, 5, seed=12)
    assert not np.array_equal(a.A, c.A)


def test_generator_rejects_k_above_n():
    with pytest.raises(ContractError):
        cs.gen_gaussian_instance(10, 20, 21, seed=0)


def test_reference_scale():
    assert cs.reference_scale(2, "quad") == (1440, 5120, 320)
    assert cs.reference_scale(2, "lorentz") == (1440, 5120, 160)


def test_cauchy_instance(lorentz_instance):
    inst = lorentz_instance
    noise = inst.b - inst.A @ inst.x_orig
    assert inst.sigma / cs.lorentzian_norm(noise, inst.gamma) == pytest.approx(
        1.05, rel=1e-12)
    assert cs.lorentzian_norm(-inst.b, inst.gamma) > inst.sigma
    assert inst.gamma == 0.08
    np.testing.assert_allclose(np.linalg.norm(inst.A, axis=0), 1.0, atol=1e-12)


def test_cauchy_rejects_bad_gamma():
    with pytest.raises(ContractError):
        cs.gen_cauchy_instance(10, 20, 2, seed=0, gamma=0.0)


def test_instance_round_trip(tmp_path, quad_instance, lorentz_instance):
    for inst in (quad_instance, lorentz_instance):
        path = tmp_path / "inst.npz"
        cs.save_instance(path, inst)
        back = cs.load_instance(path)
        for f in dataclasses.fields(inst):
            a, b = getattr(inst, f.name), getattr(back, f.name)
            if isinstance(a, np.ndarray):
                assert a.dtype == b.dtype
                np.testing.assert_array_equal(a, b)
            else:
                assert a == b and type(a) is type(b)


# -- linear algebra ---------------------------------------------------------------

def test_least_norm_identity():
    b = np.array([1.0, -2.0, 3.0])
    np.testing.assert_allclose(cs.least_norm_solution(np.eye(3), b), b)


def test_least_norm_padded_identity():
    A = np.hstack([np.eye(2), np.zeros((2, 3))])
    b = np.array([4.0, 5.0])
    np.testing.assert_allclose(cs.least_norm_solution(A, b),
                               [4, 5, 0, 0, 0], atol=1e-14)


def test_least_norm_random_system(rng):
    A = rng.standard_normal((20, 50))
    b = rng.standard_normal(20)
    x = cs.least_norm_solution(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10
    # orthogonal to the null space of A
    Q, _ = np.linalg.qr(A.T)
    for _ in range(10):
        z = rng.standard_normal(50)
        null_part = z - Q @ (Q.T @ z)
        assert abs(x @ null_part) <= 1e-10 * np.linalg.norm(null_part)


def test_least_norm_rank_deficient():
    A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
    with pytest.raises(NumericalError):
        cs.least_norm_solution(A, np.ones(2))


@pytest.mark.parametrize("adagb, mu, expected", [
    ([1.0, -2.0], 0.0, 3.0),
    ([0.0, 0.0], 0.5, 0.0),
    ([3.0, 4.0], 0.95, 45.0),
])
def test_compute_M(adagb, mu, expected):
    assert cs.compute_M(np.array(adagb), mu) == pytest.approx(expected)


def test_compute_M_rejects_mu_one():
    with pytest.raises(ContractError):
        cs.compute_M(np.ones(2), 1.0)


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-100, 100)),
       st.floats(0.0, 0.99))
def test_compute_M_dominates_sup_norm(x, mu):
    assert cs.compute_M(x, mu) >= np.abs(x).max() * (1 - 1e-12) - 1e-12


def test_spectral_norm_small_cases():
    assert cs.spectral_norm_sq(np.eye(3)) == pytest.approx(1.0)
    assert cs.spectral_norm_sq(np.diag([1.0, 2.0])) == pytest.approx(4.0)


def test_spectral_norm_matches_dense_eigensolver(rng):
    A = rng.standard_normal((30, 60))
    expected = np.linalg.eigvalsh(A @ A.T).max()
    assert cs.spectral_norm_sq(A) == pytest.approx(expected, rel=1e-8)


# -- constraints -------------------------------------------------------------------

def test_quad_constraint_values(quad_instance):
    inst = quad_instance
    con = cs.quad_constraint(inst.A, inst.b, inst.sigma, norm_sq=2.0)
    x = cs.least_norm_solution(inst.A, inst.b)
    assert con.eval(x) == pytest.approx(-inst.sigma, abs=1e-12)
    np.testing.assert_allclose(con.grad(x), 0.0, atol=1e-12)
    assert con.eval(np.zeros(256)) == pytest.approx(
        0.5 * inst.b @ inst.b - inst.sigma)
    assert (con.modulus_L, con.modulus_ell) == (2.0, 0.0)


def test_lorentz_scalar_case():
    con = cs.lorentz_constraint(np.array([[1.0]]), np.array([0.0]), 0.3, 1.0)
    x = np.array([1.0])
    assert con.eval(x) == pytest.approx(np.log(2) - 0.3)
    np.testing.assert_allclose(con.grad(x), [1.0])
    assert con.eval(np.zeros(1)) == pytest.approx(-0.3)
    np.testing.assert_allclose(con.grad(np.zeros(1)), [0.0])


# -- DC split of the Lorentzian ------------------------------------------------------

@pytest.mark.parametrize("gamma", [0.05, 0.08, 0.5, 1.0])
def test_dc_split_verifies(gamma):
    rep = cs.verify_lorentz_dc_split(gamma)
    assert rep.passed, rep
    assert rep.identity_error <= 1e-6


def test_dc_split_pointwise_values():
    c1, c2 = cs.lorentz_second_derivative_split([0.0, 1.0, -1.0, np.sqrt(3)])
    np.testing.assert_allclose(c1, [2.0, 0.0, 0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(c2, [0.0, 0.0, 0.0, 0.25], atol=1e-15)


def test_dc_split_negative_curvature_supremum():
    t = np.arange(-10, 10 + 1e-7, 1e-5)
    _, c2 = cs.lorentz_second_derivative_split(t)
    assert c2.max() == pytest.approx(0.25, abs=1e-4)


def test_dc_split_requires_wide_grid():
    with pytest.raises(ContractError):
        cs.verify_lorentz_dc_split(1.0, grid=np.linspace(-1, 1, 11))


# -- problem construction ---------------------------------------------------------------

def test_make_problem_quad(quad_instance, quad_problem):
    p = quad_problem
    assert p.m == 1
    assert beta_cap(p.constraints[0].modulus_L,
                    p.constraints[0].modulus_ell) == 1.0
    assert p.c_contains(np.zeros(p.dimension))
    assert p.c_contains(cs.least_norm_solution(quad_instance.A, quad_instance.b))
    assert np.isfinite(p.objective(quad_instance.x_orig))
    assert not p.convex


def test_make_problem_lorentz(lorentz_problem):
    con = lorentz_problem.constraints[0]
    assert beta_cap(con.modulus_L, con.modulus_ell) == pytest.approx(
        np.sqrt(8 / 9), abs=1e-12)


def test_make_problem_convex_flag():
    inst = cs.gen_gaussian_instance(20, 40, 3, seed=0, mu=0.0)
    assert cs.make_cs_problem(inst).convex


def test_make_problem_kind_mismatch(quad_instance):
    with pytest.raises(ContractError):
        cs.make_cs_problem(quad_instance, "lorentz")


def test_lower_bounds_hold(quad_problem, rng):
    p = quad_problem
    for _ in range(200):
        x = p.c_project(10 * rng.standard_normal(p.dimension))
        assert p.c_contains(x)
        assert p.objective(x) >= p.p_lower_bound
        assert p.p1_eval(x) >= p.p1_lower_bound


def test_l2_subgradient_inequality(rng):
    mu = 0.95
    for _ in range(200):
        x, v = rng.standard_normal(5), rng.standard_normal(5)
        xi = cs.l2_subgrad(x, mu)
        assert mu * np.linalg.norm(v) >= (mu * np.linalg.norm(x)
                                          + xi @ (v - x) - 1e-12)
    np.testing.assert_array_equal(cs.l2_subgrad(np.zeros(3), mu), 0.0)


# -- joint prox ----------------------------------------------------------------------------

def test_sprox_examples():
    np.testing.assert_allclose(
        cs.l1_box_sprox(np.zeros(2), np.array([2.0, -0.5]), 1.0, 1.0), [1, 0])
    np.testing.assert_allclose(
        cs.l1_box_sprox(np.array([-3.0, 0.0]), np.zeros(2), 1.0, 1.0), [1, 0])


@pytest.mark.parametrize("seed", range(5))
def test_sprox_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    v, z, rho = rng.standard_normal(2), rng.uniform(-2, 2, 2), rng.uniform(0.3, 4)
    # a hinge that can never activate leaves exactly the prox problem
    d = SubproblemData(models=[AffineModel(np.zeros(2), -1.0)], xi=-v,
                       theta=rho, L_g=1.0, y=z)
    np.testing.assert_allclose(cs.l1_box_sprox(v, z, rho, 1.0),
                               brute_force_subproblem(d), atol=1e-8)


@settings(max_examples=100)
@given(arrays(np.float64, 4, elements=st.floats(-5, 5)),
       arrays(np.float64, 4, elements=st.floats(-5, 5)),
       arrays(np.float64, 4, elements=st.floats(-5, 5)),
       st.floats(0.05, 10))
def test_sprox_nonexpansive(v, z1, z2, rho):
    out1 = cs.l1_box_sprox(v, z1, rho, 1.5)
    out2 = cs.l1_box_sprox(v, z2, rho, 1.5)
    assert np.linalg.norm(out1 - out2) <= np.linalg.norm(z1 - z2) + 1e-12


# -- metrics --------------------------------------------------------------------------------

def test_metrics(quad_instance, lorentz_instance):
    rec, _ = cs.metrics(quad_instance.x_orig, quad_instance)
    assert rec == 0.0
    x = cs.least_norm_solution(quad_instance.A, quad_instance.b) + 0.01
    r = quad_instance.A @ x - quad_instance.b
    inst = dataclasses.replace(quad_instance, sigma1=float(np.linalg.norm(r)))
    assert cs.metrics(x, inst)[1] == pytest.approx(0.0, abs=1e-14)

    li = lorentz_instance
    r = li.A @ li.x_orig - li.b
    expected = (cs.lorentzian_norm(r, li.gamma) - li.sigma) / li.sigma
    assert cs.metrics(li.x_orig, li)[1] == pytest.approx(expected)
    assert expected == pytest.approx(1 / 1.05 - 1)
