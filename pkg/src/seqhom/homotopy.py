"""Sequential homotopy driver: short homotopy legs in ``lam = 1/dt``.

Each outer iteration freezes the reference point and performs one
semismooth Newton step and one simplified step.  The pair is accepted
when the simplified increment contracts by ``theta_cap`` and the Newton
step has positive curvature for the proximal subproblem; otherwise
``lam`` grows by ``lambda_inc``.  The curvature guard keeps the iteration
on the minimizer branch of the subproblem, which the contraction test
alone cannot tell apart from a saddle branch.  After acceptance a PI controller
predicts the next ``lam`` from the observed contraction.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import List, NamedTuple, Optional

import numpy as np

from .box import criticality_residual, project_box
from .core import PrimalDual, ProblemSpec, check_dimensions, z_norm
from .subproblem import (
    Counters,
    IncreaseLambdaError,
    ProxParams,
    SubproblemNotConverged,
    newton_step,
    residual_norm,
    simplified_newton_step,
    solve_prox_subproblem,
    step_curvature,
)

logger = logging.getLogger(__name__)

THETA_FLOOR = 1e-12


@dataclass
class DriverParams:
    """Parameters of the sequential homotopy loop and its PI controller."""

    theta_cap: float = 0.9
    lambda_term: float = 1e-8
    lambda_inc: float = 2.0
    tol: float = 1e-8
    theta_ref: float = 0.5
    k_p: float = 0.2
    k_i: float = 0.005
    lambda_min: float = 1e-12
    rho: float = 0.1
    lambda_init: float = 1.0
    max_inner: int = 60
    max_outer: int = 1000
    reset_integral: bool = True
    curvature_check: bool = True
    noise_floor: float = 1e-14

    def __post_init__(self):
        if not 0.0 < self.theta_cap < 1.0:
            raise ValueError("theta_cap must lie in (0, 1)")
        if not 0.0 < self.theta_ref < 1.0:
            raise ValueError("theta_ref must lie in (0, 1)")
        if self.lambda_term <= 0 or self.tol <= 0 or self.lambda_min <= 0:
            raise ValueError("lambda_term, tol and lambda_min must be positive")
        if self.lambda_inc <= 1.0:
            raise ValueError("lambda_inc must exceed 1")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        if self.lambda_init <= 0:
            raise ValueError("lambda_init must be positive")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be nonnegative")
        if self.max_inner < 1 or self.max_outer < 1:
            raise ValueError("iteration caps must be positive")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class HomotopyState:
    lam: float
    zhat: Optional[PrimalDual] = None
    integral: float = 0.0
    counters: Counters = field(default_factory=Counters)
    flow_time: float = 0.0


@dataclass
class IterationRecord:
    outer: int
    inner: int
    lam: float
    theta: float
    curvature: float
    accepted: bool
    res_norm: float
    res_norm_plus: float
    newton_norm: float
    simplified_norm: float
    increment: float
    flow_time: float
    n_mat: int
    n_res: int
    n_disc: int
    n_active: int


@dataclass
class SolveLog:
    records: List[IterationRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def n_mat(self):
        return self.records[-1].n_mat if self.records else 0

    @property
    def n_res(self):
        return self.records[-1].n_res if self.records else 0

    @property
    def n_disc(self):
        return self.records[-1].n_disc if self.records else 0

    def accepted(self):
        return [r for r in self.records if r.accepted]

    def flow_series(self):
        """``(t, |z - zhat|_Z)`` over accepted steps."""
        acc = self.accepted()
        return np.array([r.flow_time for r in acc]), np.array([r.increment for r in acc])

    def to_rows(self):
        return [asdict(r) for r in self.records]

    def to_csv(self, path):
        names = [f.name for f in fields(IterationRecord)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for r in self.records:
                w.writerow([_fmt(getattr(r, n)) for n in names])

    def to_json(self, path=None):
        text = json.dumps({"records": self.to_rows()}, indent=1, default=_json_default)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(type(v))


class SolveResult(NamedTuple):
    z: PrimalDual
    status: str
    log: SolveLog


def _contraction(newton_norm, simplified_norm):
    return 0.0 if newton_norm <= 1e-300 else simplified_norm / newton_norm


def monotonicity_test(z, z_plus, z_plusplus, params: DriverParams, spec: ProblemSpec):
    """Accept iff ``|z++ - z+| <= theta_cap |z+ - z|``; returns ``(accept, theta)``."""
    theta = _contraction(z_norm(z_plus - z, spec), z_norm(z_plusplus - z_plus, spec))
    return theta <= params.theta_cap, theta


def pi_update(theta, state: HomotopyState, params: DriverParams) -> float:
    """PI prediction of the next ``lam`` after an accepted step."""
    theta = min(max(theta, THETA_FLOOR), 1.0 - 1e-16)
    e = math.log(params.theta_ref) - math.log(theta)
    state.integral += e
    state.lam = max(params.lambda_min,
                    state.lam / math.exp(params.k_p * e + params.k_i * state.integral))
    return state.lam


def reject_update(state: HomotopyState, params: DriverParams) -> float:
    state.lam *= params.lambda_inc
    if params.reset_integral:
        state.integral = min(state.integral, 0.0)
    state.counters.n_disc += 1
    return state.lam


def solve(spec: ProblemSpec, z0: PrimalDual, params: DriverParams = None,
          callback=None) -> SolveResult:
    """Run the sequential homotopy method from ``z0``.

    A Newton increment below ``noise_floor * max(1, |z|_Z)`` counts as a
    zero step (``theta = 0``).  Status is ``"solved"`` once
    ``lam <= lambda_term`` and the accepted outer increment is at most
    ``tol``; otherwise ``"max_iterations"``, ``"stalled"`` (``max_inner``
    rejections in a row) or ``"diverged"``.
    """
    params = DriverParams() if params is None else params
    check_dimensions(z0, spec)
    z = z0.copy()
    xp = project_box(z.x, spec)
    if not np.array_equal(xp, z.x):
        logger.warning("initial point outside the box; projecting")
        z = PrimalDual(xp, z.y)
    state = HomotopyState(lam=params.lambda_init)
    counters = state.counters
    log = SolveLog()

    for outer in range(params.max_outer):
        zhat = z.copy()
        state.zhat = zhat
        for inner in range(params.max_inner + 1):
            if inner == params.max_inner:
                logger.info("stalled after %d rejections at lam=%g", inner, state.lam)
                return SolveResult(z, "stalled", log)
            lam = state.lam
            prox = ProxParams(lam, params.rho, zhat)
            theta = curv = math.nan
            nn = sn = rn = rnp = math.nan
            n_act = -1
            try:
                z_plus, kkt = newton_step(z, prox, spec, counters)
                n_act = kkt.active.count()
                z_pp = simplified_newton_step(z_plus, kkt, prox, spec, counters)
            except IncreaseLambdaError as exc:
                logger.debug("linear solve failed at lam=%g: %s", lam, exc)
                accept = False
            else:
                if not (z_plus.is_finite() and z_pp.is_finite()):
                    log.records.append(IterationRecord(
                        outer, inner, lam, theta, curv, False, rn, rnp, nn, sn, math.nan,
                        state.flow_time, counters.n_mat, counters.n_res,
                        counters.n_disc, n_act))
                    return SolveResult(z, "diverged", log)
                nn = z_norm(z_plus - z, spec)
                sn = z_norm(z_pp - z_plus, spec)
                theta = _contraction(nn, sn)
                # below roundoff the ratio is noise; treat like a zero step
                if nn <= params.noise_floor * max(1.0, z_norm(z, spec)):
                    theta = 0.0
                accept = theta <= params.theta_cap
                if accept and params.curvature_check:
                    curv = step_curvature(z, z_plus, kkt, spec)
                    accept = curv > 0.0
                rn = kkt.residual_norm
                rnp = kkt.residual_norm_plus
            increment = math.nan
            if accept:
                z = z_pp
                state.flow_time += 1.0 / lam
                increment = z_norm(z - zhat, spec)
            else:
                reject_update(state, params)
            log.records.append(IterationRecord(
                outer, inner, lam, theta, curv, accept, rn, rnp, nn, sn, increment,
                state.flow_time, counters.n_mat, counters.n_res, counters.n_disc, n_act))
            if callback is not None:
                callback(log.records[-1], z)
            if accept:
                if lam <= params.lambda_term and increment <= params.tol:
                    return SolveResult(z, "solved", log)
                pi_update(theta, state, params)
                break
    return SolveResult(z, "max_iterations", log)


class FixedStepError(RuntimeError):
    pass


def backward_euler_step(spec: ProblemSpec, zhat: PrimalDual, lam, rho, tol=1e-13,
                        lambda_start=1e3, shrink=1.5, counters: Counters = None):
    """One exact projected backward Euler step, traced by continuation in lam.

    Starts at ``max(lam, lambda_start)`` where Newton converges from
    ``zhat`` and lowers ``lam`` geometrically, halving the reduction
    (in log scale) whenever a stage fails.
    """
    lam_c = max(lam, lambda_start)
    z = zhat.copy()
    while True:
        try:
            z = solve_prox_subproblem(ProxParams(lam_c, rho, zhat), spec, z, tol,
                                      counters=counters)
            break
        except (SubproblemNotConverged, IncreaseLambdaError):
            lam_c *= 10.0
            if lam_c > 1e12:
                raise FixedStepError("subproblem fails even for huge lam") from None
    lam_prev = lam_c
    factor = shrink
    while lam_prev > lam:
        lam_c = max(lam, lam_prev / factor)
        try:
            z_new = solve_prox_subproblem(ProxParams(lam_c, rho, zhat), spec, z, tol,
                                          counters=counters)
        except (SubproblemNotConverged, IncreaseLambdaError):
            factor = math.sqrt(factor)
            if factor < 1.0 + 1e-8:
                raise FixedStepError(f"continuation stuck at lam={lam_prev:g}") from None
            continue
        z, lam_prev = z_new, lam_c
        factor = min(shrink, factor * factor)
    return z


def fixed_lambda_solve(spec: ProblemSpec, z0: PrimalDual, lam, rho, n_steps,
                       tol=1e-13, **kwargs) -> List[PrimalDual]:
    """``n_steps`` exact backward Euler steps of size ``1/lam``.

    Returns the iterates including ``z0``.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    seq = [z0.copy()]
    z = z0
    for _ in range(n_steps):
        z = backward_euler_step(spec, z, lam, rho, tol=tol, **kwargs)
        seq.append(z)
    return seq


def solution_quality(z: PrimalDual, spec: ProblemSpec, rho=0.0):
    """Criticality residuals ``(stat, feas)`` of a final iterate."""
    return criticality_residual(z, spec, rho)


def replay_decisions(log: SolveLog, params: DriverParams):
    """Recompute accept/reject from logged contraction factors and curvatures."""
    out = []
    for r in log.records:
        ok = (not math.isnan(r.theta)) and r.theta <= params.theta_cap
        if params.curvature_check:
            ok = ok and r.curvature > 0.0
        out.append(ok)
    return out


__all__ = [
    "DriverParams", "HomotopyState", "IterationRecord", "SolveLog", "SolveResult",
    "monotonicity_test", "pi_update", "reject_update", "solve", "fixed_lambda_solve",
    "backward_euler_step", "replay_decisions", "solution_quality", "FixedStepError",
    "residual_norm",
]
