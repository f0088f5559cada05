"""Explicit integration of the projected gradient/antigradient flow.

Used for validation and figure data, not as a production integrator:
fixed-step forward Euler with Lyapunov and descent monitors.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .auglag import evaluate, lagrangian_rho
from .box import active_set_at, project_box, project_tangent_cone
from .core import PrimalDual, ProblemSpec

logger = logging.getLogger(__name__)


class FlowDivergenceError(RuntimeError):
    def __init__(self, message, time, state):
        super().__init__(message)
        self.time = time
        self.state = state


class SingularHessianError(np.linalg.LinAlgError):
    """The primal-dual Hessian of ``L^rho`` is singular at ``state``."""

    def __init__(self, message, state):
        super().__init__(message)
        self.state = state


def forward_euler_step(z: PrimalDual, h, spec: ProblemSpec, rho):
    """``x+ = P_C(x - h grad_x L^rho)``, ``y+ = y + h c(x)``."""
    if h <= 0:
        raise ValueError("step size must be positive")
    ev = evaluate(z, spec, rho)
    return PrimalDual(project_box(z.x - h * ev.grad_x, spec), z.y + h * ev.c)


@dataclass
class FlowTrajectory:
    """Recorded flow states with monitor channels.

    Channels ``slack_L`` and ``slack_c`` are nonnegative where the descent
    conditions ``dL/dt <= 0`` and
    ``g1 d/dt(|c|^2/2) <= -dL/dt - g2 |c|^2`` hold.  Time derivatives are
    forward differences between consecutive records (backward at the end).
    """

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    channels: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.size

    def state(self, k) -> PrimalDual:
        return PrimalDual(self.x[k].copy(), self.y[k].copy())

    @property
    def final(self) -> PrimalDual:
        return self.state(-1)

    def to_csv(self, path):
        names = ["L_rho", "norm_c", "stat_res", "slack_L", "slack_c"]
        if "slack_gronwall" in self.channels:
            names.append("slack_gronwall")
        header = (["t"] + [f"x{i}" for i in range(self.x.shape[1])]
                  + [f"y{i}" for i in range(self.y.shape[1])] + names)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k in range(len(self)):
                row = [self.times[k], *self.x[k], *self.y[k],
                       *(self.channels[n][k] for n in names)]
                w.writerow([f"{v:.17g}" for v in row])


def _derivative(values, times):
    d = np.empty_like(values)
    if values.size < 2:
        d[:] = 0.0
        return d
    d[:-1] = np.diff(values) / np.diff(times)
    d[-1] = d[-2]
    return d


def integrate_flow(z0: PrimalDual, h, t_final, spec: ProblemSpec, rho,
                   gamma1=0.5, gamma2=0.5, gamma3: Optional[float] = None,
                   record_every=1) -> FlowTrajectory:
    """Forward Euler integration of the projected flow up to ``t_final``.

    Monitor violations are recorded, never fatal.  A non-finite state
    raises :class:`FlowDivergenceError`.
    """
    if h <= 0 or t_final < 0:
        raise ValueError("need h > 0 and t_final >= 0")
    n_steps = int(round(t_final / h))
    z = PrimalDual(project_box(z0.x, spec), z0.y)
    times, xs, ys, Ls, ncs, stats = [], [], [], [], [], []

    def record(k, z, ev):
        times.append(k * h)
        xs.append(z.x.copy())
        ys.append(z.y.copy())
        Ls.append(lagrangian_rho(z, spec, rho))
        ncs.append(np.sqrt(max(float(ev.c @ ev.r), 0.0)))
        stats.append(spec.metric_x.norm(project_tangent_cone(-ev.grad_x, z.x, spec)))

    # overflow on the way to divergence is reported by FlowDivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps + 1):
            ev = evaluate(z, spec, rho)
            if k % record_every == 0 or k == n_steps:
                record(k, z, ev)
            if k == n_steps:
                break
            z = PrimalDual(project_box(z.x - h * ev.grad_x, spec), z.y + h * ev.c)
            if not z.is_finite():
                raise FlowDivergenceError(f"non-finite state at t={(k + 1) * h:g}",
                                          (k + 1) * h, z)

    t = np.array(times)
    L = np.array(Ls)
    nc = np.array(ncs)
    dL = _derivative(L, t)
    dhalf_c = _derivative(0.5 * nc**2, t)
    channels = {
        "L_rho": L,
        "norm_c": nc,
        "stat_res": np.array(stats),
        "slack_L": -dL,
        "slack_c": -dL - gamma2 * nc**2 - gamma1 * dhalf_c,
    }
    if gamma3 is not None:
        channels["slack_gronwall"] = -gamma3 * nc**2 - dhalf_c
    return FlowTrajectory(t, np.array(xs), np.array(ys), channels)


def linearized_spectrum_scalar(rho):
    """Closed-form eigenvalues of the scalar example's flow linearization."""
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    root = np.sqrt(complex((rho + 1.0) * (rho - 3.0)))
    return 0.5 * (root + 1.0 - rho), 0.5 * (-root + 1.0 - rho)


def flow_jacobian(z: PrimalDual, spec: ProblemSpec, rho):
    """Jacobian of the unconstrained flow right-hand side in Riesz coordinates.

    ``[[-(H + rho A*A), -A*], [A, 0]]`` with ``H`` the Riesz Hessian of
    ``L^0(x, y + rho c)``; dense, for small problems only.
    """
    ev = evaluate(z, spec, rho)
    H = spec.hess_lagrangian(z.x, ev.y_shift)
    J = ev.jacobian
    H = H.toarray() if sp.issparse(H) else H
    J = J.toarray() if sp.issparse(J) else np.asarray(J)
    Gx = spec.metric_x.matrix().toarray()
    Gy = spec.metric_y.matrix().toarray()
    A = np.linalg.solve(Gy, J)
    Astar = np.linalg.solve(Gx, J.T)
    Hr = np.linalg.solve(Gx, H)
    top = np.hstack([-(Hr + rho * Astar @ A), -Astar])
    bottom = np.hstack([A, np.zeros((spec.n_y, spec.n_y))])
    return np.vstack([top, bottom])


def eigenvalues_2x2(m):
    """Eigenvalues of a real 2x2 matrix from its characteristic polynomial.

    Exact for repeated roots, unlike a general eigensolver on a Jordan block.
    """
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    root = np.sqrt(complex(tr * tr - 4.0 * det))
    return 0.5 * (tr + root), 0.5 * (tr - root)


def _newton_system(z, spec, rho):
    ev = evaluate(z, spec, rho)
    H = spec.hess_lagrangian(z.x, ev.y_shift)
    H = H.toarray() if sp.issparse(H) else H
    J = ev.jacobian.toarray() if sp.issparse(ev.jacobian) else np.asarray(ev.jacobian)
    # coordinate form of the primal-dual Hessian of L^rho and its gradient
    gy = spec.metric_y.matrix().toarray()
    aug = rho * J.T @ np.linalg.solve(gy, J)
    hess = np.block([[H + aug, J.T], [J, np.zeros((spec.n_y, spec.n_y))]])
    grad = np.concatenate([ev.dL, ev.r])
    return hess, grad


def newton_flow_step(z: PrimalDual, h, spec: ProblemSpec, rho, cond_limit=1e12):
    """Explicit Euler step of the Newton flow ``z' = -[hess L^rho]^{-1} grad L^rho``.

    Only meaningful without active bounds.  Raises
    :class:`SingularHessianError` where the Hessian is (numerically) singular.
    """
    if spec.has_box and active_set_at(project_box(z.x, spec), spec).count():
        raise ValueError("Newton flow is defined only away from active bounds")
    hess, grad = _newton_system(z, spec, rho)
    if not np.isfinite(np.linalg.cond(hess)) or np.linalg.cond(hess) > cond_limit:
        raise SingularHessianError("Hessian of the augmented Lagrangian is singular", z)
    step = np.linalg.solve(hess, grad)
    return PrimalDual(z.x - h * step[: spec.n_x], z.y - h * step[spec.n_x:])


def integrate_newton_flow(z0: PrimalDual, h, t_final, spec: ProblemSpec, rho):
    """Sequence of Newton-flow states; stops early at a singular Hessian."""
    states = [z0.copy()]
    z = z0
    for _ in range(int(round(t_final / h))):
        try:
            z = newton_flow_step(z, h, spec, rho)
        except SingularHessianError:
            logger.info("Newton flow stopped at singular Hessian")
            break
        states.append(z)
    return states
