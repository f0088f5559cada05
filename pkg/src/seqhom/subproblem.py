"""Semismooth Newton machinery for one projected backward Euler step.

For a reference point ``zhat`` and ``lam = 1/dt`` the step solves

    x - P_C(xhat - dt grad_x L^rho(x, y)) = 0,    y - yhat - dt c(x) = 0,

scaled by ``lam``.  Linearizations avoid the dense augmentation block
``rho A*A`` by solving for the shifted increment ``dy~ = dy + rho A dx``.

Rows of the Newton matrix come in three kinds:

* free primal rows, multiplied by ``G_X`` (coordinate form),
* boxed primal rows in Riesz form, pinned to the bound where the
  projector argument lies outside the box,
* dual rows, multiplied by ``G_Y`` and by ``(1 + rho lam)^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .auglag import LagrangianEval, evaluate, phi_rho
from .box import ActiveSet, active_set_from_argument, project_box
from .core import PrimalDual, ProblemSpec, z_norm
from .linalg import DENSE_LIMIT, Factorization, SingularMatrixError, factorize


class IncreaseLambdaError(SingularMatrixError):
    """The Newton matrix could not be factorized; a larger lam should help."""


@dataclass
class ProxParams:
    lam: float
    rho: float
    zhat: PrimalDual

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")

    @property
    def dt(self):
        return np.inf if self.lam == 0 else 1.0 / self.lam


@dataclass
class Counters:
    """Matrix evaluations, residual evaluations, discarded steps."""

    n_mat: int = 0
    n_res: int = 0
    n_disc: int = 0


@dataclass
class _Residual:
    F: PrimalDual
    ev: LagrangianEval
    proj: np.ndarray
    active: ActiveSet


@dataclass
class KKTSystem:
    """Newton matrix with its active-set pinning and factorization."""

    base: object
    matrix: object
    rhs: np.ndarray
    active: ActiveSet
    lam: float
    rho: float
    n_x: int
    n_y: int
    factorization: Factorization = field(repr=False, default=None)
    residual_norm: float = float("nan")
    residual_norm_plus: float = float("nan")
    hessian: object = field(repr=False, default=None)
    jacobian: object = field(repr=False, default=None)

    @property
    def size(self):
        return self.n_x + self.n_y


def _residual(z, prox, spec, counters=None):
    if prox.lam == 0 and spec.has_box:
        raise ValueError("lam = 0 is only allowed without box constraints")
    if counters is not None:
        counters.n_res += 1
    lam = prox.lam
    ev = evaluate(z, spec, prox.rho)
    zhat = prox.zhat
    Fx = lam * (z.x - zhat.x) + ev.grad_x
    proj = z.x.copy()
    status = np.zeros(spec.n_x, dtype=np.int8)
    if spec.has_box:
        B = spec.box_index
        s = zhat.x[B] - ev.grad_x[B] / lam
        sub = active_set_from_argument(_embed(s, B, spec.n_x), spec)
        status[B] = sub.status[B]
        proj[B] = np.minimum(np.maximum(s, spec.lower[B]), spec.upper[B])
        Fx[B] = lam * (z.x[B] - proj[B])
    Fy = lam * (z.y - zhat.y) - ev.c
    return _Residual(PrimalDual(Fx, Fy), ev, proj, ActiveSet(status))


def _embed(values, index, n):
    out = np.zeros(n)
    out[index] = values
    return out


def backward_euler_residual(z: PrimalDual, prox: ProxParams, spec: ProblemSpec) -> PrimalDual:
    """Scaled backward Euler residual, both blocks Riesz-represented.

    ``(lam (x - P_C(xhat - grad_x L^rho / lam)), lam (y - yhat) - c(x))``
    """
    if prox.lam <= 0:
        raise ValueError("the residual needs lam > 0")
    return _residual(z, prox, spec).F


def _dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float)


def _box_rows(spec, x, y_shift, H, J):
    B = spec.box_index
    if spec.box_riesz_rows is not None:
        return spec.box_riesz_rows(x, y_shift)
    if spec.metric_x.is_identity:
        return H[B, :], J.T[B, :]
    Rx = spec.metric_x.gram_solve(_dense(H))[B, :]
    Ry = spec.metric_x.gram_solve(_dense(J).T)[B, :]
    return Rx, Ry


def _base_matrix(z, prox, spec, ev, H=None):
    """Unpinned Newton matrix; dense below the dense-solver size limit."""
    lam, rho = prox.lam, prox.rho
    n_x, n_y = spec.n_x, spec.n_y
    H = spec.hess_lagrangian(z.x, ev.y_shift) if H is None else H
    if n_x + n_y <= DENSE_LIMIT:
        H, J = _dense(H), _dense(ev.jacobian)
        m = np.zeros((n_x + n_y, n_x + n_y))
        m[:n_x, :n_x] = lam * spec.metric_x.dense_matrix() + H
        m[:n_x, n_x:] = J.T
        if spec.has_box:
            B = spec.box_index
            Rx, Ry = _box_rows(spec, z.x, ev.y_shift, H, J)
            m[B, :n_x] = _dense(Rx)
            m[B, B] += lam
            m[B, n_x:] = _dense(Ry)
        m[n_x:, :n_x] = J
        m[n_x:, n_x:] = -(lam / (1.0 + rho * lam)) * spec.metric_y.dense_matrix()
        return m
    Hs = sp.csr_matrix(H)
    J = sp.csr_matrix(ev.jacobian)
    top = sp.hstack([lam * spec.metric_x.matrix() + Hs, J.T]).tocsr()
    if spec.has_box:
        B, N = spec.box_index, spec.free_index
        Rx, Ry = _box_rows(spec, z.x, ev.y_shift, Hs, J)
        eye_B = sp.identity(n_x, format="csr")[B, :]
        box_rows = sp.hstack([lam * eye_B + sp.csr_matrix(Rx), sp.csr_matrix(Ry)])
        stacked = sp.vstack([top[N, :], box_rows]).tocsr()
        order = np.concatenate([N, B])
        perm = sp.csr_matrix((np.ones(n_x), (order, np.arange(n_x))), shape=(n_x, n_x))
        top = (perm @ stacked).tocsr()
    bottom = sp.hstack([J, -(lam / (1.0 + rho * lam)) * spec.metric_y.matrix()])
    return sp.vstack([top, bottom]).tocsr()


def _pin(base, active, n_x, n_y):
    if not active.status.any():
        return base
    act = np.concatenate([active.active.astype(float), np.zeros(n_y)])
    if not sp.issparse(base):
        m = base * (1.0 - act)[:, None]
        m[np.diag_indices_from(m)] += act
        return m
    keep = sp.diags(1.0 - act)
    return (keep @ base + sp.diags(act)).tocsr()


def _rhs(z, prox, spec, res):
    lam, rho = prox.lam, prox.rho
    ev = res.ev
    top = -(ev.dL + lam * spec.metric_x.gram_apply(z.x - prox.zhat.x))
    if spec.has_box:
        B = spec.box_index
        top[B] = -res.F.x[B]
        act = res.active.active
        top[act] = res.proj[act] - z.x[act]
    bottom = -(ev.r - lam * spec.metric_y.gram_apply(z.y - prox.zhat.y)) / (1.0 + rho * lam)
    return np.concatenate([top, bottom])


def _factorize(matrix):
    try:
        return factorize(matrix)
    except SingularMatrixError as exc:
        raise IncreaseLambdaError(f"Newton matrix singular ({exc}); increase lam",
                                  index=exc.index) from exc


def assemble_kkt(z: PrimalDual, prox: ProxParams, spec: ProblemSpec,
                 counters: Counters = None, _res=None) -> KKTSystem:
    """Assemble and factorize the Newton system at ``z``.

    The active set is read off the projector argument
    ``xhat - grad_x L^rho / lam``.
    """
    res = _residual(z, prox, spec) if _res is None else _res
    if counters is not None:
        counters.n_mat += 1
    H = spec.hess_lagrangian(z.x, res.ev.y_shift)
    base = _base_matrix(z, prox, spec, res.ev, H)
    matrix = _pin(base, res.active, spec.n_x, spec.n_y)
    kkt = KKTSystem(base, matrix, _rhs(z, prox, spec, res), res.active,
                    prox.lam, prox.rho, spec.n_x, spec.n_y,
                    hessian=H, jacobian=res.ev.jacobian)
    kkt.factorization = _factorize(matrix)
    return kkt


def _update(z, prox, spec, res, delta):
    n_x = spec.n_x
    lam, rho = prox.lam, prox.rho
    dx = delta[:n_x]
    dy_shift = delta[n_x:]
    dy = (dy_shift + rho * (res.ev.c - lam * (z.y - prox.zhat.y))) / (1.0 + rho * lam)
    return PrimalDual(z.x + dx, z.y + dy)


def newton_step(z: PrimalDual, prox: ProxParams, spec: ProblemSpec,
                counters: Counters = None):
    """One semismooth Newton step; returns ``(z_plus, kkt)``."""
    res = _residual(z, prox, spec, counters)
    kkt = assemble_kkt(z, prox, spec, counters, _res=res)
    kkt.residual_norm = z_norm(res.F, spec)
    delta = kkt.factorization.solve(kkt.rhs)
    return _update(z, prox, spec, res, delta), kkt


def simplified_newton_step(z_plus: PrimalDual, kkt: KKTSystem, prox: ProxParams,
                           spec: ProblemSpec, counters: Counters = None) -> PrimalDual:
    """Newton step at ``z_plus`` with the previous linearization.

    Only the residual and the active-set pinning are refreshed; the matrix
    is refactorized only if the active set changed.
    """
    res = _residual(z_plus, prox, spec, counters)
    kkt.residual_norm_plus = z_norm(res.F, spec)
    if res.active != kkt.active:
        kkt.matrix = _pin(kkt.base, res.active, kkt.n_x, kkt.n_y)
        kkt.active = res.active
        kkt.factorization = _factorize(kkt.matrix)
    kkt.rhs = _rhs(z_plus, prox, spec, res)
    delta = kkt.factorization.solve(kkt.rhs)
    return _update(z_plus, prox, spec, res, delta)


def step_curvature(z: PrimalDual, z_plus: PrimalDual, kkt: KKTSystem,
                   spec: ProblemSpec) -> float:
    """Normalized curvature of the proximal subproblem at the Newton point.

    The reduced Hessian of the subproblem with the auxiliary dual variable
    eliminated is ``S = lam G_X + H + (1 + rho lam)/lam J' G_Y^{-1} J``.
    Returns the minimum of ``d'Sd / (lam |d|_X^2)`` over inactive directions
    for systems below the dense limit, and its value along the primal step
    ``d = x+ - x`` otherwise.  Nonpositive values flag a step towards a
    saddle point of the subproblem.
    """
    lam, rho = kkt.lam, kkt.rho
    any_active = bool(kkt.active.status.any())
    free = ~kkt.active.active
    if any_active and not free.any():
        return np.inf
    if kkt.size <= DENSE_LIMIT:
        H, J = _dense(kkt.hessian), _dense(kkt.jacobian)
        G = spec.metric_x.dense_matrix()
        JtJ = J.T @ (J if spec.metric_y.is_identity else spec.metric_y.gram_solve(J))
        S = H + ((1.0 + rho * lam) / lam) * JtJ
        if any_active:
            S = S[np.ix_(free, free)]
            G = G[np.ix_(free, free)]
        S = 0.5 * (S + S.T)
        if spec.metric_x.is_identity:
            return 1.0 + float(np.linalg.eigvalsh(S)[0]) / lam
        mu = sla.eigh(S, lam * G, eigvals_only=True, subset_by_index=[0, 0])[0]
        return 1.0 + float(mu)
    dx = np.where(free, z_plus.x - z.x, 0.0)
    nrm2 = spec.metric_x.inner(dx, dx)
    if not nrm2 > 0.0:
        return np.inf
    Jd = kkt.jacobian @ dx
    q = float(dx @ (kkt.hessian @ dx))
    q += (1.0 + rho * lam) / lam * float(Jd @ spec.metric_y.gram_solve(Jd))
    return 1.0 + q / (lam * nrm2)


def fixpoint_map(z: PrimalDual, prox: ProxParams, spec: ProblemSpec) -> PrimalDual:
    """``(P_C(xhat - dt grad_x L^rho(z)), yhat + dt c(x))``."""
    if prox.lam <= 0:
        raise ValueError("the fixed-point map needs lam > 0")
    dt = 1.0 / prox.lam
    ev = evaluate(z, spec, prox.rho)
    return PrimalDual(project_box(prox.zhat.x - dt * ev.grad_x, spec),
                      prox.zhat.y + dt * ev.c)


def prox_problem_value(z: PrimalDual, prox: ProxParams, spec: ProblemSpec) -> float:
    """Objective of the primal-dual proximally regularized problem at ``x``.

    The auxiliary variable is eliminated as ``w = -dt c(x)``.
    """
    if prox.lam <= 0:
        raise ValueError("needs lam > 0")
    w = -spec.c(z.x) / prox.lam
    dx = z.x - prox.zhat.x
    dw = w - prox.zhat.y
    return phi_rho(z.x, spec, prox.rho) + prox.lam * (
        0.5 * spec.metric_x.inner(dx, dx) + 0.5 * spec.metric_y.inner(dw, dw)
    )


def residual_norm(z, prox, spec):
    return z_norm(_residual(z, prox, spec).F, spec)


class SubproblemNotConverged(RuntimeError):
    pass


def solve_prox_subproblem(prox: ProxParams, spec: ProblemSpec, z_init=None,
                          tol=1e-13, max_iter=50, counters: Counters = None):
    """Semismooth Newton iteration for one backward Euler step at fixed lam.

    Converged when the residual norm drops to ``tol`` or the increment
    stagnates at roundoff level with a residual below ``1e3 * tol``.
    """
    z = prox.zhat.copy() if z_init is None else z_init.copy()
    for _ in range(max_iter):
        res = _residual(z, prox, spec, counters)
        rnorm = z_norm(res.F, spec)
        if rnorm <= tol:
            return z
        kkt = assemble_kkt(z, prox, spec, counters, _res=res)
        delta = kkt.factorization.solve(kkt.rhs)
        z_new = _update(z, prox, spec, res, delta)
        if not z_new.is_finite():
            break
        step = z_norm(z_new - z, spec)
        z = z_new
        if step <= 1e-15 * (1.0 + z_norm(z, spec)) and residual_norm(z, prox, spec) <= 1e3 * tol:
            return z
    raise SubproblemNotConverged(f"no convergence at lam={prox.lam:g}")
