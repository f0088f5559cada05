"""Problem interface, metric spaces and primal-dual points.

A problem ``min phi(x) over x in C s.t. c(x) = 0`` is described in
coordinates.  The constraint is given through its *residual* ``r(x)``, a
dual coordinate vector; the Riesz-represented constraint value is
``c(x) = G_Y^{-1} r(x)``.  Dual variables are always stored in Riesz
representation, so the duality pairing ``<y, c(x)>_Y`` is simply
``y @ r(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .linalg import factorize


class SpaceMetric:
    """Coordinate space with a symmetric positive definite Gram operator.

    ``gram=None`` stands for the Euclidean metric.
    """

    def __init__(self, dim: int, gram=None):
        if dim <= 0:
            raise ValueError("dimension must be positive")
        if gram is not None and gram.shape != (dim, dim):
            raise ValueError(f"Gram matrix has shape {gram.shape}, expected {(dim, dim)}")
        self.dim = int(dim)
        self.gram = None if gram is None else sp.csr_matrix(gram, dtype=float)
        self._factor = None
        self._dense = None

    @classmethod
    def identity(cls, dim):
        return cls(dim)

    @classmethod
    def block_diag(cls, *metrics):
        """Product metric of several spaces."""
        if all(m.is_identity for m in metrics):
            return cls(sum(m.dim for m in metrics))
        blocks = [sp.identity(m.dim, format="csr") if m.is_identity else m.gram
                  for m in metrics]
        return cls(sum(m.dim for m in metrics), sp.block_diag(blocks, format="csr"))

    @property
    def is_identity(self):
        return self.gram is None

    def matrix(self):
        if self.gram is None:
            return sp.identity(self.dim, format="csr")
        return self.gram

    def dense_matrix(self):
        """Cached dense Gram matrix; read-only."""
        if self._dense is None:
            d = np.eye(self.dim) if self.gram is None else self.gram.toarray()
            d.flags.writeable = False
            self._dense = d
        return self._dense

    def gram_apply(self, v):
        v = np.asarray(v, dtype=float)
        return v.copy() if self.gram is None else self.gram @ v

    def gram_solve(self, v):
        v = np.asarray(v, dtype=float)
        if self.gram is None:
            return v.copy()
        if self._factor is None:
            self._factor = factorize(self.gram)
        return self._factor.solve(v)

    def inner(self, u, v):
        if self.gram is None:
            return float(np.dot(u, v))
        return float(np.dot(u, self.gram @ v))

    def norm(self, v):
        return float(np.sqrt(max(self.inner(v, v), 0.0)))

    def __repr__(self):
        kind = "identity" if self.gram is None else f"gram nnz={self.gram.nnz}"
        return f"SpaceMetric(dim={self.dim}, {kind})"


def _as_matrix(m):
    if type(m) is np.ndarray and m.ndim == 2 and m.dtype == float:
        return m
    return m if sp.issparse(m) else np.atleast_2d(np.asarray(m, dtype=float))


@dataclass
class ProblemSpec:
    """Callback bundle for ``min phi(x), x in C, c(x) = 0`` with a box ``C``.

    Parameters
    ----------
    n_x, n_y : int
        Primal and dual dimensions.
    objective : callable
        ``x -> phi(x)``.
    objective_derivative : callable
        ``x -> dphi/dx``, the coordinate derivative (a covector).
    residual : callable
        ``x -> r(x)``, constraint residual in dual coordinates.
    residual_jacobian : callable
        ``x -> dr/dx`` as an ``(n_y, n_x)`` dense or sparse matrix.
    lagrangian_hessian : callable
        ``(x, y_shift) -> d^2/dx^2 [phi(x) + y_shift @ r(x)]`` in
        coordinates.  Callers pass the shifted multiplier
        ``y + rho * c(x)``; the augmentation term is never formed.
    lower, upper : array_like, optional
        Box bounds, ``-inf``/``+inf`` for free coordinates.
    metric_x, metric_y : SpaceMetric, optional
        Defaults to Euclidean metrics.  ``metric_x`` must not couple boxed
        and free coordinates.
    box_mask : array_like of bool, optional
        Coordinates subject to the box.  Defaults to the coordinates with a
        finite bound.
    box_riesz_rows : callable, optional
        ``(x, y_shift) -> (Rx, Ry)`` with the rows of
        ``G_X^{-1} [hessian | jacobian^T]`` belonging to the boxed block.
        Needed for sparse Newton systems when ``metric_x`` is not the
        identity on that block.
    """

    n_x: int
    n_y: int
    objective: Callable
    objective_derivative: Callable
    residual: Callable
    residual_jacobian: Callable
    lagrangian_hessian: Callable
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    metric_x: Optional[SpaceMetric] = None
    metric_y: Optional[SpaceMetric] = None
    box_mask: Optional[np.ndarray] = None
    box_riesz_rows: Optional[Callable] = None
    name: str = "problem"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lower = (np.full(self.n_x, -np.inf) if self.lower is None
                      else np.asarray(self.lower, dtype=float).copy())
        self.upper = (np.full(self.n_x, np.inf) if self.upper is None
                      else np.asarray(self.upper, dtype=float).copy())
        if self.lower.shape != (self.n_x,) or self.upper.shape != (self.n_x,):
            raise ValueError("bounds must have length n_x")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds must not contain NaN")
        if np.any(self.lower > self.upper):
            bad = int(np.flatnonzero(self.lower > self.upper)[0])
            raise ValueError(f"lower bound exceeds upper bound at coordinate {bad}")
        if self.metric_x is None:
            self.metric_x = SpaceMetric.identity(self.n_x)
        if self.metric_y is None:
            self.metric_y = SpaceMetric.identity(self.n_y)
        if self.metric_x.dim != self.n_x or self.metric_y.dim != self.n_y:
            raise ValueError("metric dimensions do not match n_x / n_y")
        finite = np.isfinite(self.lower) | np.isfinite(self.upper)
        if self.box_mask is None:
            self.box_mask = finite
        else:
            self.box_mask = np.asarray(self.box_mask, dtype=bool).copy()
            if self.box_mask.shape != (self.n_x,):
                raise ValueError("box_mask must have length n_x")
            if np.any(finite & ~self.box_mask):
                raise ValueError("finite bounds outside box_mask")
        self.box_index = np.flatnonzero(self.box_mask)
        self.free_index = np.flatnonzero(~self.box_mask)

    # derived quantities, all Riesz-represented

    def phi(self, x):
        return float(self.objective(x))

    def grad_phi(self, x):
        return self.metric_x.gram_solve(self.objective_derivative(x))

    def c(self, x):
        return self.metric_y.gram_solve(self.residual(x))

    def jac_c_apply(self, x, v):
        return self.metric_y.gram_solve(_as_matrix(self.residual_jacobian(x)) @ v)

    def jac_c_adjoint_apply(self, x, w):
        return self.metric_x.gram_solve(_as_matrix(self.residual_jacobian(x)).T @ w)

    def hess_lagrangian(self, x, y_shift):
        return _as_matrix(self.lagrangian_hessian(x, y_shift))

    @property
    def has_box(self):
        return self.box_index.size > 0


@dataclass
class PrimalDual:
    """Primal-dual point ``z = (x, y)``; ``y`` in Riesz representation."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if not (type(self.x) is np.ndarray and self.x.dtype == float and self.x.ndim == 1):
            self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if not (type(self.y) is np.ndarray and self.y.dtype == float and self.y.ndim == 1):
            self.y = np.atleast_1d(np.asarray(self.y, dtype=float))

    @classmethod
    def zeros(cls, spec: ProblemSpec):
        return cls(np.zeros(spec.n_x), np.zeros(spec.n_y))

    @classmethod
    def from_vector(cls, v, n_x):
        v = np.asarray(v, dtype=float)
        return cls(v[:n_x].copy(), v[n_x:].copy())

    def vector(self):
        return np.concatenate([self.x, self.y])

    def copy(self):
        return PrimalDual(self.x.copy(), self.y.copy())

    def __add__(self, other):
        return PrimalDual(self.x + other.x, self.y + other.y)

    def __sub__(self, other):
        return PrimalDual(self.x - other.x, self.y - other.y)

    def __mul__(self, s):
        return PrimalDual(s * self.x, s * self.y)

    __rmul__ = __mul__

    def is_finite(self):
        return bool(np.isfinite(self.x).all() and np.isfinite(self.y).all())


def check_dimensions(z: PrimalDual, spec: ProblemSpec):
    if z.x.shape != (spec.n_x,) or z.y.shape != (spec.n_y,):
        raise ValueError(
            f"point has dimensions ({z.x.size}, {z.y.size}), "
            f"problem expects ({spec.n_x}, {spec.n_y})"
        )


def z_norm(z: PrimalDual, spec: ProblemSpec) -> float:
    """Product norm ``sqrt(|x|_X^2 + |y|_Y^2)``."""
    check_dimensions(z, spec)
    return math.sqrt(spec.metric_x.inner(z.x, z.x) + spec.metric_y.inner(z.y, z.y))


@dataclass
class DerivativeReport:
    grad_phi: float
    jac_c: float
    hess_lagrangian: float

    @property
    def max_deviation(self):
        return max(self.grad_phi, self.jac_c, self.hess_lagrangian)


def _rel_dev(analytic, approx):
    analytic = np.asarray(analytic, dtype=float)
    scale = max(np.max(np.abs(analytic)) if analytic.size else 0.0, 1.0)
    return float(np.max(np.abs(analytic - approx)) / scale) if analytic.size else 0.0


def check_derivatives(spec: ProblemSpec, x0, h=1e-5, y=None, seed=0) -> DerivativeReport:
    """Compare analytic derivatives against central finite differences.

    Deviations are ``max|analytic - fd| / max(max|analytic|, 1)``.  The
    Hessian is checked at multiplier ``y`` (random when omitted).
    """
    x0 = np.asarray(x0, dtype=float)
    if y is None:
        y = np.random.default_rng(seed).standard_normal(spec.n_y)
    n = spec.n_x
    fd_grad = np.empty(n)
    fd_jac = np.empty((spec.n_y, n))
    fd_hess = np.empty((n, n))

    def lag_grad(x):
        return spec.objective_derivative(x) + _as_matrix(spec.residual_jacobian(x)).T @ y

    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        fd_grad[i] = (spec.objective(x0 + e) - spec.objective(x0 - e)) / (2 * h)
        fd_jac[:, i] = (spec.residual(x0 + e) - spec.residual(x0 - e)) / (2 * h)
        fd_hess[:, i] = (lag_grad(x0 + e) - lag_grad(x0 - e)) / (2 * h)

    jac = _as_matrix(spec.residual_jacobian(x0))
    hess = spec.hess_lagrangian(x0, y)
    jac = jac.toarray() if sp.issparse(jac) else jac
    hess = hess.toarray() if sp.issparse(hess) else hess
    return DerivativeReport(
        grad_phi=_rel_dev(spec.objective_derivative(x0), fd_grad),
        jac_c=_rel_dev(jac, fd_jac),
        hess_lagrangian=_rel_dev(hess, fd_hess),
    )


def adjoint_defect(spec: ProblemSpec, x, n_pairs=100, seed=0) -> float:
    """Largest relative defect of ``<grad c v, w>_X = <v, c' w>_Y`` on random pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        v = rng.standard_normal(spec.n_y)
        w = rng.standard_normal(spec.n_x)
        lhs = spec.metric_x.inner(spec.jac_c_adjoint_apply(x, v), w)
        rhs = spec.metric_y.inner(v, spec.jac_c_apply(x, w))
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs)))
    return worst
