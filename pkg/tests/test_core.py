import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import p1_assembly_loops
from seqhom.benchmarks import (
    EllipticConfig,
    elliptic_problem,
    nonconvex_qp_problem,
    pendulum_problem,
    qp_problem,
    random_qp_problem,
    scalar_problem,
)
from seqhom.core import (
    PrimalDual,
    ProblemSpec,
    SpaceMetric,
    adjoint_defect,
    check_derivatives,
    check_dimensions,
    z_norm,
)


def all_benchmarks():
    return [pendulum_problem(), scalar_problem(), nonconvex_qp_problem(),
            random_qp_problem(7, 3, seed=4), elliptic_problem(EllipticConfig(N=4, gamma=1e-2))]


def test_z_norm_zero():
    spec = pendulum_problem()
    assert z_norm(PrimalDual.zeros(spec), spec) == 0.0


def test_z_norm_euclidean():
    spec = pendulum_problem()
    assert z_norm(PrimalDual([3.0, 0.0], [4.0]), spec) == pytest.approx(5.0, abs=1e-15)


def test_z_norm_dimension_mismatch():
    spec = pendulum_problem()
    with pytest.raises(ValueError):
        z_norm(PrimalDual([1.0, 2.0, 3.0], [0.0]), spec)
    with pytest.raises(ValueError):
        check_dimensions(PrimalDual([1.0, 2.0], [0.0, 1.0]), spec)


def test_z_norm_elliptic_metric_against_loop_assembly():
    spec = elliptic_problem(EllipticConfig(N=2, gamma=1.0))
    K, M = p1_assembly_loops(2)
    interior = [4]
    rng = np.random.default_rng(0)
    u, q, y = rng.standard_normal(1), rng.standard_normal(9), rng.standard_normal(1)
    Ki = K[np.ix_(interior, interior)]
    expected = np.sqrt(u @ Ki @ u + q @ M @ q + y @ Ki @ y)
    z = PrimalDual(np.concatenate([u, q]), y)
    assert z_norm(z, spec) == pytest.approx(expected, rel=1e-13)
    assert Ki[0, 0] == pytest.approx(4.0)


def test_check_derivatives_pendulum():
    rep = check_derivatives(pendulum_problem(), [0.3, 0.4], h=1e-5)
    assert rep.max_deviation <= 1e-6


def test_check_derivatives_linear_constraint_exact():
    spec = qp_problem(np.eye(3), np.ones(3), [[1.0, 2.0, 3.0], [0.0, 1.0, -1.0]], [1.0, 2.0])
    rep = check_derivatives(spec, [0.2, -0.3, 0.7])
    assert rep.jac_c <= 1e-10


def test_check_derivatives_elliptic():
    spec = elliptic_problem(EllipticConfig(N=4, gamma=1e-2, p=1.0))
    rng = np.random.default_rng(3)
    x0 = rng.uniform(-1, 1, spec.n_x)
    rep = check_derivatives(spec, x0, h=1e-5)
    assert rep.max_deviation <= 1e-5


@pytest.mark.parametrize("idx", range(5))
def test_adjoint_consistency(idx):
    spec = all_benchmarks()[idx]
    x = np.random.default_rng(idx).uniform(0.1, 0.9, spec.n_x)
    assert adjoint_defect(spec, x, n_pairs=100) <= 1e-8


def test_gram_round_trip_and_positivity():
    spec = elliptic_problem(EllipticConfig(N=8, gamma=1e-2))
    rng = np.random.default_rng(1)
    for metric in (spec.metric_x, spec.metric_y):
        for _ in range(20):
            v = rng.standard_normal(metric.dim)
            back = metric.gram_solve(metric.gram_apply(v))
            assert np.linalg.norm(back - v) <= 1e-10 * np.linalg.norm(v)
            assert metric.inner(v, v) > 0


def test_space_metric_validation_and_block_diag():
    with pytest.raises(ValueError):
        SpaceMetric(0)
    with pytest.raises(ValueError):
        SpaceMetric(2, np.eye(3))
    m = SpaceMetric.block_diag(SpaceMetric(2), SpaceMetric(1, np.array([[4.0]])))
    assert m.dim == 3 and not m.is_identity
    np.testing.assert_allclose(m.dense_matrix(), np.diag([1.0, 1.0, 4.0]))
    assert SpaceMetric.block_diag(SpaceMetric(1), SpaceMetric(2)).is_identity
    assert m.norm([0.0, 0.0, 1.0]) == pytest.approx(2.0)


def _tiny(**kw):
    return ProblemSpec(1, 1, lambda x: 0.0, lambda x: np.zeros(1), lambda x: x,
                       lambda x: np.eye(1), lambda x, y: np.zeros((1, 1)), **kw)


def test_problem_spec_bound_validation():
    with pytest.raises(ValueError):
        _tiny(lower=[1.0], upper=[0.0])
    with pytest.raises(ValueError):
        _tiny(lower=[np.nan])
    with pytest.raises(ValueError):
        _tiny(lower=[0.0, 1.0])
    with pytest.raises(ValueError):
        _tiny(lower=[0.0], box_mask=[False])
    s = _tiny(lower=[0.0])
    assert s.has_box and s.upper[0] == np.inf
    assert not _tiny().has_box


def test_problem_spec_sparse_jacobian_accepted():
    spec = elliptic_problem(EllipticConfig(N=4, gamma=1e-2))
    assert sp.issparse(spec.residual_jacobian(np.zeros(spec.n_x)))
    assert spec.box_index.size == spec.metadata["n_q"]


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       st.floats(-10, 10))
@settings(max_examples=50, deadline=None)
def test_primal_dual_arithmetic(v, s):
    z = PrimalDual.from_vector(v, 2)
    np.testing.assert_array_equal((z + z).vector(), 2 * np.asarray(v))
    np.testing.assert_array_equal((z - z).vector(), np.zeros(3))
    np.testing.assert_allclose((s * z).vector(), s * np.asarray(v))
    assert z.copy() is not z and z.is_finite()


def test_primal_dual_nonfinite():
    assert not PrimalDual([np.nan], [0.0]).is_finite()
    assert not PrimalDual([0.0], [np.inf]).is_finite()
