import csv
import json
import math

import numpy as np
import pytest

from seqhom.benchmarks import (
    EllipticConfig,
    elliptic_problem,
    nonconvex_qp_problem,
    pendulum_problem,
    random_qp_problem,
)
from seqhom.core import PrimalDual
from seqhom.homotopy import (
    DriverParams,
    FixedStepError,
    HomotopyState,
    IterationRecord,
    backward_euler_step,
    fixed_lambda_solve,
    monotonicity_test,
    pi_update,
    reject_update,
    replay_decisions,
    solution_quality,
    solve,
)
from seqhom.subproblem import ProxParams, residual_norm


@pytest.fixture(scope="module")
def pend():
    return pendulum_problem()


@pytest.fixture(scope="module")
def pend_run(pend):
    params = DriverParams(rho=1.0)
    return params, solve(pend, pend.metadata["start"], params)


def test_params_validation():
    for bad in ({"theta_cap": 1.0}, {"theta_ref": 0.0}, {"lambda_inc": 1.0}, {"rho": -1.0},
                {"tol": 0.0}, {"lambda_init": 0.0}, {"max_inner": 0}, {"noise_floor": -1.0}):
        with pytest.raises(ValueError):
            DriverParams(**bad)
    assert "theta_cap" in DriverParams.field_names()


def test_monotonicity_examples(pend):
    params = DriverParams()
    z = PrimalDual([0.0, 0.0], [0.0])
    z1 = PrimalDual([1.0, 0.0], [0.0])
    ok, theta = monotonicity_test(z, z1, PrimalDual([1.5, 0.0], [0.0]), params, pend)
    assert ok and theta == pytest.approx(0.5)
    ok, theta = monotonicity_test(z, z1, PrimalDual([1.0, 0.95], [0.0]), params, pend)
    assert not ok and theta == pytest.approx(0.95)
    ok, theta = monotonicity_test(z, z, z, params, pend)
    assert ok and theta == 0.0


def test_pi_neutral_at_reference():
    state = HomotopyState(lam=0.3)
    assert pi_update(0.5, state, DriverParams()) == pytest.approx(0.3, rel=1e-15)
    assert state.integral == 0.0


def test_pi_hand_value():
    state = HomotopyState(lam=1.0)
    lam = pi_update(0.25, state, DriverParams())
    assert lam == pytest.approx(2.0 ** -(0.2 + 0.005), rel=1e-14)
    assert state.integral == pytest.approx(math.log(2.0))


def test_pi_direction_and_floor():
    params = DriverParams(lambda_min=1e-3)
    s = HomotopyState(lam=1.0)
    assert pi_update(0.8, s, params) > 1.0
    s = HomotopyState(lam=1e-3)
    assert pi_update(0.0, s, params) == 1e-3


def test_reject_update():
    params = DriverParams(lambda_inc=3.0)
    s = HomotopyState(lam=0.5, integral=2.0)
    assert reject_update(s, params) == 1.5
    assert s.integral == 0.0 and s.counters.n_disc == 1
    s = HomotopyState(lam=0.5, integral=-1.0)
    reject_update(s, params)
    assert s.integral == -1.0
    s = HomotopyState(lam=0.5, integral=2.0)
    reject_update(s, DriverParams(reset_integral=False))
    assert s.integral == 2.0


def test_pendulum_reaches_minimum(pend, pend_run):
    params, res = pend_run
    assert res.status == "solved"
    np.testing.assert_allclose(res.z.vector(), pend.metadata["minimum"].vector(), atol=1e-8)
    assert res.log.n_mat > 0 and res.log.n_res >= 2 * res.log.n_mat - res.log.n_disc


def test_solved_runs_are_critical(pend, pend_run):
    params, res = pend_run
    stat, feas = solution_quality(res.z, pend)
    assert max(stat, feas) <= 10 * params.tol


def test_start_at_critical_point(pend):
    res = solve(pend, pend.metadata["minimum"], DriverParams(rho=1.0))
    assert res.status == "solved"
    np.testing.assert_allclose(res.z.vector(), pend.metadata["minimum"].vector(), atol=1e-14)
    assert res.log.n_disc == 0


def test_elliptic_small_grid():
    spec = elliptic_problem(EllipticConfig(N=16, gamma=1e-2))
    params = DriverParams()
    res = solve(spec, PrimalDual(np.zeros(spec.n_x), np.zeros(spec.n_y)), params)
    assert res.status == "solved"
    stat, feas = solution_quality(res.z, spec)
    assert max(stat, feas) <= 10 * params.tol


def test_log_invariants(pend_run):
    params, res = pend_run
    recs = res.log.records
    assert all(r.lam >= params.lambda_min for r in recs)
    times = [r.flow_time for r in recs]
    assert all(b >= a for a, b in zip(times, times[1:]))
    for a, b in zip(recs, recs[1:]):
        if not a.accepted and b.outer == a.outer:
            assert b.lam == pytest.approx(params.lambda_inc * a.lam, rel=1e-15)
    assert sum(not r.accepted for r in recs) == res.log.n_disc


def test_lambda_after_k_rejections():
    params = DriverParams(lambda_inc=2.0)
    s = HomotopyState(lam=0.1)
    for _ in range(5):
        reject_update(s, params)
    assert s.lam == pytest.approx(0.1 * 2.0 ** 5, rel=1e-15)


def test_replay_is_deterministic(pend, pend_run):
    params, res = pend_run
    assert replay_decisions(res.log, params) == [r.accepted for r in res.log.records]
    again = solve(pend, pend.metadata["start"], params)
    assert [r.lam for r in again.log.records] == [r.lam for r in res.log.records]
    np.testing.assert_array_equal(again.z.vector(), res.z.vector())


def test_max_iterations_status(pend):
    res = solve(pend, pend.metadata["start"], DriverParams(rho=1.0, max_outer=3))
    assert res.status == "max_iterations"
    assert max(r.outer for r in res.log.records) == 2


def test_stalled_status(pend):
    # tiny initial lam makes the first step fail the curvature test
    res = solve(pend, pend.metadata["start"], DriverParams(rho=1.0, lambda_init=1e-6, max_inner=1))
    assert res.status == "stalled"
    assert res.log.n_disc == 1


def test_callback_sees_every_record(pend):
    seen = []
    res = solve(pend, pend.metadata["start"], DriverParams(rho=1.0, max_outer=5),
                callback=lambda rec, z: seen.append(rec))
    assert seen == res.log.records


def test_initial_point_projected(caplog):
    spec = nonconvex_qp_problem()
    res = solve(spec, PrimalDual([0.5, -1.0], [0.0]), DriverParams(max_outer=2))
    assert "projecting" in caplog.text
    assert res.z.x[1] >= 0.0


def test_log_csv_and_json(tmp_path, pend_run):
    _, res = pend_run
    res.log.to_csv(tmp_path / "log.csv")
    with open(tmp_path / "log.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == len(res.log)
    assert list(rows[0]) == list(IterationRecord.__dataclass_fields__)
    assert float(rows[-1]["lam"]) == res.log.records[-1].lam
    data = json.loads(res.log.to_json(tmp_path / "log.json"))
    assert len(data["records"]) == len(res.log)
    assert json.loads((tmp_path / "log.json").read_text()) == data


def test_flow_series(pend_run):
    _, res = pend_run
    t, inc = res.log.flow_series()
    assert len(t) == len(res.log.accepted()) == len(inc)
    assert np.all(np.diff(t) > 0)


def test_backward_euler_step_solves_prox(pend):
    zhat = pend.metadata["start"]
    for lam in (10.0, 0.1, 0.001):
        z = backward_euler_step(pend, zhat, lam, 1.0)
        assert residual_norm(z, ProxParams(lam, 1.0, zhat), pend) <= 1e-12


def test_backward_euler_step_failure(monkeypatch):
    import seqhom.homotopy as hom
    from seqhom.subproblem import SubproblemNotConverged

    spec = random_qp_problem(3, 1, seed=0)
    with pytest.raises(ValueError):
        backward_euler_step(spec, PrimalDual([np.nan] * 3, [0.0]), 1.0, 0.0)

    def never(*args, **kwargs):
        raise SubproblemNotConverged("stub")

    monkeypatch.setattr(hom, "solve_prox_subproblem", never)
    with pytest.raises(FixedStepError):
        backward_euler_step(spec, PrimalDual(np.zeros(3), [0.0]), 1.0, 0.0)


def test_fixed_lambda_solve_examples(pend):
    seq = fixed_lambda_solve(pend, pend.metadata["start"], 0.1, 1.0, 3)
    assert len(seq) == 4
    np.testing.assert_array_equal(seq[0].vector(), pend.metadata["start"].vector())
    zmin = pend.metadata["minimum"].vector()
    errs = [np.linalg.norm(z.vector() - zmin) for z in seq]
    assert errs[3] < errs[1] < errs[0]
    with pytest.raises(ValueError):
        fixed_lambda_solve(pend, pend.metadata["start"], 0.0, 1.0, 1)


def test_fixed_lambda_solve_at_critical_point_constant(pend):
    zmin = pend.metadata["minimum"]
    for z in fixed_lambda_solve(pend, zmin, 1.0, 1.0, 3):
        np.testing.assert_allclose(z.vector(), zmin.vector(), atol=1e-14)
