import numpy as np
import pytest

from oracles import five_point_stencil, gauss_solve, p1_assembly_loops
from seqhom.benchmarks import (
    EllipticConfig,
    active_flags,
    build_fem,
    elliptic_problem,
    nonconvex_qp_problem,
    pendulum_problem,
    qp_problem,
    random_qp_problem,
    riesz_solve,
    scalar_problem,
    split_solution,
)
from seqhom.box import criticality_residual
from seqhom.core import PrimalDual, check_derivatives
from seqhom.homotopy import DriverParams, solve


def dense(m):
    return m.toarray() if hasattr(m, "toarray") else np.asarray(m)


def zero_start(spec):
    return PrimalDual(np.clip(np.zeros(spec.n_x), spec.lower, spec.upper), np.zeros(spec.n_y))


def test_pendulum_data():
    spec = pendulum_problem()
    assert spec.c(np.array([0.0, -1.0]))[0] == 0.0
    assert spec.objective(np.array([0.0, -1.0])) == -1.0
    assert not spec.has_box


def test_scalar_data():
    spec = scalar_problem()
    assert spec.objective(np.array([2.0])) == -2.0
    assert criticality_residual(spec.metadata["solution"], spec) == (0.0, 0.0)


def test_nonconvex_qp_unbounded_ray():
    spec = nonconvex_qp_problem()
    vals = [spec.objective(np.array([0.0, t])) for t in (1.0, 10.0, 100.0)]
    assert vals[0] > vals[1] > vals[2]
    assert all(spec.c(np.array([0.0, t]))[0] == 0.0 for t in (1.0, 10.0))


def test_random_qp_kkt_against_oracle():
    for seed in range(5):
        spec = random_qp_problem(7, 3, seed=seed, definite=True)
        H, g, A, b = (spec.metadata[k] for k in ("H", "g", "A", "b"))
        ref = gauss_solve(np.block([[H, A.T], [A, np.zeros((3, 3))]]), np.concatenate([g, b]))
        res = solve(spec, zero_start(spec), DriverParams(tol=1e-12))
        assert res.status == "solved"
        np.testing.assert_allclose(res.z.x, ref[:7], atol=1e-8)


def test_qp_zero_data_gives_zero():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((4, 4))
    spec = qp_problem(B @ B.T + np.eye(4), np.zeros(4), rng.standard_normal((2, 4)), np.zeros(2))
    res = solve(spec, PrimalDual(np.ones(4), np.ones(2)), DriverParams())
    assert res.status == "solved"
    assert np.linalg.norm(res.z.vector()) <= 1e-8


def test_random_qp_validation():
    with pytest.raises(ValueError):
        random_qp_problem(2, 3)


def test_elliptic_config_validation():
    with pytest.raises(ValueError):
        EllipticConfig(N=1, gamma=1e-2)
    with pytest.raises(ValueError):
        EllipticConfig(N=4, gamma=0.0)
    cfg = EllipticConfig(N=4, gamma=1e-2, p=2)
    assert cfg.a == pytest.approx(1e-2) and cfg.b == pytest.approx(1e2)
    assert "quadrature" in cfg.describe()


def test_elliptic_linear_case_residual():
    spec = elliptic_problem(EllipticConfig(N=8, gamma=1e-2, a=1.0, b=0.0))
    n_u = spec.metadata["n_u"]
    rng = np.random.default_rng(1)
    assert np.all(spec.c(np.zeros(spec.n_x)) == 0.0)
    u = rng.standard_normal(n_u)
    x = np.concatenate([u, np.zeros(spec.n_x - n_u)])
    c1 = spec.c(x)
    assert np.linalg.norm(c1) > 0
    np.testing.assert_allclose(spec.c(2 * x), 2 * c1, rtol=1e-13)


@pytest.fixture(scope="module")
def ell16():
    spec = elliptic_problem(EllipticConfig(N=16, gamma=1e-2))
    return spec, solve(spec, zero_start(spec), DriverParams())


def test_elliptic_mirror_symmetry(ell16):
    spec, res = ell16
    assert res.status == "solved"
    N = 16
    u, q, _ = split_solution(res.z, spec)
    grid_u = u.reshape(N + 1, N + 1)
    grid_q = q.reshape(N + 1, N + 1)
    for g in (grid_u, grid_q):
        np.testing.assert_allclose(g, g[:, ::-1], atol=1e-8)
        np.testing.assert_allclose(g, g[::-1, :], atol=1e-8)


@pytest.mark.parametrize("p", [0, 1])
def test_elliptic_no_lower_activity_small_p(p):
    spec = elliptic_problem(EllipticConfig(N=16, gamma=1e-2, p=p))
    res = solve(spec, zero_start(spec), DriverParams())
    assert res.status == "solved"
    at_lo, at_up = active_flags(res.z, spec)
    assert not at_lo.any()


def test_fem_matches_loop_assembly():
    for N in (2, 3, 6):
        fem = build_fem(N)
        K, M = p1_assembly_loops(N)
        np.testing.assert_allclose(dense(fem.K_full), K, atol=1e-13)
        np.testing.assert_allclose(dense(fem.M_full), M, atol=1e-15)


def test_fem_interior_stiffness_is_five_point_stencil():
    for N in (4, 8, 9):
        np.testing.assert_allclose(dense(build_fem(N).K), five_point_stencil(N), atol=1e-13)


def test_fem_invariants():
    fem = build_fem(8)
    np.testing.assert_allclose(np.asarray(fem.K_full.sum(axis=1)).ravel(), 0.0, atol=1e-13)
    assert fem.M_full.sum() == pytest.approx(1.0, rel=1e-14)
    K = dense(fem.K)
    np.testing.assert_allclose(K, K.T, atol=0)
    assert np.linalg.eigvalsh(K).min() > 0
    assert fem.areas.sum() == pytest.approx(1.0) and fem.n_interior == 49
    with pytest.raises(ValueError):
        build_fem(1)


def test_riesz_solve_round_trip_and_zero():
    fem = build_fem(8)
    v = np.random.default_rng(2).standard_normal(fem.n_interior)
    np.testing.assert_allclose(riesz_solve(fem, fem.K @ v), v, atol=1e-12)
    assert np.all(riesz_solve(fem, np.zeros(fem.n_interior)) == 0.0)


def test_riesz_solve_poisson_center_value():
    N = 32
    fem = build_fem(N)
    load = (fem.M_full @ np.ones(fem.n_nodes))[fem.interior]
    u = fem.extend(riesz_solve(fem, load))
    center = (N // 2) + (N + 1) * (N // 2)
    assert u[center] == pytest.approx(0.0736, abs=2e-3)


@pytest.mark.parametrize("factory", [pendulum_problem, scalar_problem, nonconvex_qp_problem,
                                     lambda: random_qp_problem(5, 2, seed=4)])
def test_analytic_derivatives(factory):
    spec = factory()
    x0 = np.random.default_rng(3).uniform(0.1, 0.9, spec.n_x)
    assert check_derivatives(spec, x0).max_deviation <= 1e-6


@pytest.mark.parametrize("p", [0, 2])
def test_elliptic_derivatives(p):
    spec = elliptic_problem(EllipticConfig(N=5, gamma=1e-2, p=p))
    x0 = np.clip(np.random.default_rng(4).uniform(-0.5, 0.5, spec.n_x), spec.lower, spec.upper)
    assert check_derivatives(spec, x0).max_deviation <= 1e-5


def test_linear_quadratic_case_matches_one_shot_kkt():
    wide = dict(q_lower=lambda a, b: np.full_like(a, -1e8), q_upper=lambda a, b: np.full_like(a, 1e8))
    spec = elliptic_problem(EllipticConfig(N=8, gamma=1e-2, b=0.0, **wide))
    n = spec.n_x
    x0 = np.zeros(n)
    H = dense(spec.hess_lagrangian(x0, np.zeros(spec.n_y)))
    J = dense(spec.residual_jacobian(x0))
    g0 = spec.objective_derivative(x0)
    c0 = spec.c(x0)
    m = J.shape[0]
    kkt = np.block([[H, J.T], [J, np.zeros((m, m))]])
    ref = np.linalg.solve(kkt, -np.concatenate([g0, c0]))[:n]
    res = solve(spec, zero_start(spec), DriverParams(tol=1e-12))
    assert res.status == "solved"
    np.testing.assert_allclose(res.z.x, ref, atol=1e-8 * max(1.0, np.abs(ref).max()))


def test_mesh_convergence_order():
    sols = {}
    for N in (16, 32, 64):
        spec = elliptic_problem(EllipticConfig(N=N, gamma=1e-2))
        res = solve(spec, zero_start(spec), DriverParams())
        assert res.status == "solved"
        sols[N] = split_solution(res.z, spec)[0].reshape(N + 1, N + 1)

    def coarse_diff(Nc):
        return np.abs(sols[Nc] - sols[2 * Nc][::2, ::2]).max()

    e16, e32 = coarse_diff(16), coarse_diff(32)
    assert np.log2(e16 / e32) >= 1.5
