"""Projections onto boxes, their tangent cones, and criticality measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PrimalDual, ProblemSpec

MEMBERSHIP_TOL = 1e-12
ACTIVITY_TOL = 1e-12

INACTIVE, AT_LOWER, AT_UPPER = 0, -1, 1


@dataclass
class ActiveSet:
    """Per-coordinate status: 0 inactive, -1 at lower, +1 at upper bound."""

    status: np.ndarray

    @property
    def lower(self):
        return self.status == AT_LOWER

    @property
    def upper(self):
        return self.status == AT_UPPER

    @property
    def active(self):
        return self.status != INACTIVE

    def count(self):
        return int(np.count_nonzero(self.status))

    def __eq__(self, other):
        return isinstance(other, ActiveSet) and np.array_equal(self.status, other.status)


def project_box(v, spec: ProblemSpec):
    """Componentwise clamp onto ``[lower, upper]``."""
    return np.minimum(np.maximum(np.asarray(v, dtype=float), spec.lower), spec.upper)


def active_set_at(x, spec: ProblemSpec) -> ActiveSet:
    """Classify ``x`` coordinates that sit on a bound."""
    x = np.asarray(x, dtype=float)
    lo, up = spec.lower, spec.upper
    with np.errstate(invalid="ignore"):
        at_lo = np.isfinite(lo) & (np.abs(x - lo) <= ACTIVITY_TOL * np.maximum(1.0, np.abs(lo)))
        at_up = np.isfinite(up) & (np.abs(x - up) <= ACTIVITY_TOL * np.maximum(1.0, np.abs(up)))
    status = np.zeros(x.shape, dtype=np.int8)
    status[at_up] = AT_UPPER
    # degenerate l == u counts as lower; the cone is {0} either way
    status[at_lo] = AT_LOWER
    return ActiveSet(status)


def active_set_from_argument(s, spec: ProblemSpec) -> ActiveSet:
    """Active set of ``P_C`` at its argument ``s``: strictly outside the box.

    Arguments exactly on a bound count as inactive.
    """
    status = np.zeros(spec.n_x, dtype=np.int8)
    status[s > spec.upper] = AT_UPPER
    status[s < spec.lower] = AT_LOWER
    return ActiveSet(status)


def _check_member(x, spec):
    below = spec.lower - x
    above = x - spec.upper
    viol = np.maximum(np.max(below, initial=-np.inf), np.max(above, initial=-np.inf))
    if viol > MEMBERSHIP_TOL:
        raise ValueError(f"point lies outside the box by {viol:.3e}")


def project_tangent_cone(d, x, spec: ProblemSpec):
    """Project ``d`` onto the tangent cone ``T(C, x)`` of the box at ``x``."""
    d = np.asarray(d, dtype=float)
    x = np.asarray(x, dtype=float)
    _check_member(x, spec)
    act = active_set_at(x, spec)
    out = d.copy()
    lo, up = act.lower, act.upper
    out[lo] = np.maximum(d[lo], 0.0)
    out[up] = np.minimum(d[up], 0.0)
    fixed = lo & np.isfinite(spec.upper) & (
        np.abs(spec.upper - x) <= ACTIVITY_TOL * np.maximum(1.0, np.abs(spec.upper))
    )
    out[fixed] = 0.0
    return out


def moreau_decompose(d, x, spec: ProblemSpec):
    """Split ``d`` into tangent-cone and polar-cone parts."""
    tangent = project_tangent_cone(d, x, spec)
    return tangent, np.asarray(d, dtype=float) - tangent


def criticality_residual(z: PrimalDual, spec: ProblemSpec, rho=0.0):
    """Return ``(|P_T(-grad_x L^rho)|_X, |c(x)|_Y)``.

    The cone is taken at the projection of ``x`` so that iterates carrying
    roundoff outside the box can still be measured.
    """
    from .auglag import evaluate

    ev = evaluate(z, spec, rho)
    xc = project_box(z.x, spec)
    stat = spec.metric_x.norm(project_tangent_cone(-ev.grad_x, xc, spec))
    feas = spec.metric_y.norm(ev.c)
    return stat, feas
