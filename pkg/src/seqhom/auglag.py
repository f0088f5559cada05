"""Augmented objective and Lagrangian, their gradients and Lyapunov identity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PrimalDual, ProblemSpec, _as_matrix


@dataclass
class LagrangianEval:
    """Quantities shared by every gradient evaluation at one point.

    ``grad_x`` is the Riesz gradient ``G_X^{-1} dL`` where ``dL`` is the
    coordinate derivative of ``L^0(x, y_shift)``.
    """

    r: np.ndarray
    c: np.ndarray
    y_shift: np.ndarray
    dL: np.ndarray
    grad_x: np.ndarray
    jacobian: object


def evaluate(z: PrimalDual, spec: ProblemSpec, rho=0.0) -> LagrangianEval:
    r = np.asarray(spec.residual(z.x), dtype=float)
    c = spec.metric_y.gram_solve(r)
    y_shift = z.y + rho * c
    jac = _as_matrix(spec.residual_jacobian(z.x))
    dL = spec.objective_derivative(z.x) + jac.T @ y_shift
    return LagrangianEval(r, c, y_shift, dL, spec.metric_x.gram_solve(dL), jac)


def _check_rho(rho):
    if rho < 0:
        raise ValueError("rho must be nonnegative")


def phi_rho(x, spec: ProblemSpec, rho) -> float:
    """``phi(x) + rho/2 |c(x)|_Y^2``."""
    _check_rho(rho)
    r = spec.residual(x)
    c = spec.metric_y.gram_solve(r)
    # |c|_Y^2 = c^T G_Y c = c^T r
    return spec.phi(x) + 0.5 * rho * float(c @ r)


def lagrangian_rho(z: PrimalDual, spec: ProblemSpec, rho) -> float:
    """``phi^rho(x) + <y, c(x)>_Y``; the pairing is ``y_R @ r(x)``."""
    _check_rho(rho)
    r = spec.residual(z.x)
    c = spec.metric_y.gram_solve(r)
    return spec.phi(z.x) + 0.5 * rho * float(c @ r) + float(z.y @ r)


def grad_x_L_rho(z: PrimalDual, spec: ProblemSpec, rho):
    """Riesz gradient ``grad phi + grad c (y + rho c)``."""
    _check_rho(rho)
    return evaluate(z, spec, rho).grad_x


def grad_y_L_rho(z: PrimalDual, spec: ProblemSpec):
    return spec.c(z.x)


def flow_direction(z: PrimalDual, spec: ProblemSpec, rho):
    """Right-hand side of the projected gradient/antigradient flow."""
    from .box import project_box, project_tangent_cone

    ev = evaluate(z, spec, rho)
    dx = project_tangent_cone(-ev.grad_x, project_box(z.x, spec), spec)
    return PrimalDual(dx, ev.c)


def dLdt_identity(z: PrimalDual, spec: ProblemSpec, rho, h=1e-6):
    """Compare ``d/dt L^rho`` along the flow with its closed form.

    Returns
    -------
    lhs_fd : float
        ``(L^rho(z_h) - L^rho(z)) / h`` with ``z_h`` one forward Euler step.
    rhs : float
        ``-|P_T(-grad_x L^rho)|_X^2 + |c(x)|_Y^2``.
    """
    from .flow import forward_euler_step

    d = flow_direction(z, spec, rho)
    rhs = -spec.metric_x.inner(d.x, d.x) + spec.metric_y.inner(d.y, d.y)
    z_h = forward_euler_step(z, h, spec, rho)
    lhs = (lagrangian_rho(z_h, spec, rho) - lagrangian_rho(z, spec, rho)) / h
    return lhs, rhs
