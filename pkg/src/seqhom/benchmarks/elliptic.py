"""Control-constrained quasilinear elliptic optimal control on the unit square.

    min  1/2 |u - u_d|^2_{L2} + gamma/2 |q|^2_{L2}
    s.t. int grad(v) . (a + b u^2) grad(u) - int v q = 0  for all v in H^1_0,
         q_l <= q <= q_u.

Discretized with P1 elements: ``u`` on interior nodes with the stiffness
metric, ``q`` on all nodes with the mass metric, and the dual variable as
a Riesz representative in the stiffness metric.  Since ``u`` is piecewise
linear the diffusion coefficient integrates exactly elementwise:
``int_T (a + b u^2) = a|T| + b u_T' M_T u_T``.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from ..core import PrimalDual, ProblemSpec, SpaceMetric
from .fem import FemAssembly, build_fem


def default_target(x1, x2):
    return 12.0 * (1.0 - x1) * x1 * (1.0 - x2) * x2


def default_upper(x1, x2):
    return np.minimum(50.0, 800.0 * np.maximum((x1 - 0.5) ** 2, (x2 - 0.5) ** 2))


def default_lower(x1, x2):
    return np.full_like(np.asarray(x1, dtype=float), -50.0)


@dataclass
class EllipticConfig:
    """Discretization and data of the elliptic benchmark.

    ``a`` and ``b`` default to ``10**-p`` and ``10**p``.  ``gamma`` has no
    default on purpose so that every run records it.
    """

    N: int
    gamma: float
    p: float = 0.0
    a: Optional[float] = None
    b: Optional[float] = None
    q_lower: Callable = default_lower
    q_upper: Callable = default_upper
    u_d: Callable = default_target

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError("N must be an integer >= 2")
        self.N = int(self.N)
        if self.a is None:
            self.a = 10.0 ** (-self.p)
        if self.b is None:
            self.b = 10.0 ** self.p
        if not (self.a > 0 and self.gamma > 0):
            raise ValueError("a and gamma must be positive")
        if self.b < 0:
            raise ValueError("b must be nonnegative")

    def describe(self):
        d = {k: v for k, v in asdict(self).items() if not callable(v)}
        d["quadrature"] = "exact elementwise (order-2 rule equivalent)"
        d["mesh"] = "P1, alternating-diagonal right-triangle split"
        d["data_interpolation"] = "nodal"
        return d


class _EllipticOps:
    """Vectorized elementwise evaluation of the quasilinear form."""

    def __init__(self, fem: FemAssembly, cfg: EllipticConfig):
        self.fem = fem
        self.cfg = cfg
        self.a, self.b, self.gamma = cfg.a, cfg.b, cfg.gamma
        self.n_u = fem.n_interior
        self.n_q = fem.n_nodes
        tris = fem.triangles
        self.tris = tris
        rows = np.repeat(tris, 3, axis=1).ravel()
        cols = np.tile(tris, (1, 3)).ravel()
        ri = fem.node_to_interior[rows]
        ci = fem.node_to_interior[cols]
        self.keep = (ri >= 0) & (ci >= 0)
        self.rows_i = ri[self.keep]
        self.cols_i = ci[self.keep]
        self.scale = 2.0 * self.b / fem.areas
        self.M_I = fem.M_full[fem.interior][:, fem.interior].tocsr()
        self.M_Iall = fem.M_full[fem.interior].tocsr()
        self.ud = fem.interpolate(cfg.u_d)
        self.E = fem.extension()

    def split(self, x):
        return x[: self.n_u], x[self.n_u:]

    def _local(self, u):
        uT = self.fem.extend(u)[self.tris]
        Ku = np.einsum("tij,tj->ti", self.fem.K_loc, uT)
        Mu = np.einsum("tij,tj->ti", self.fem.M_loc, uT)
        kappa = self.a + self.b * np.einsum("ti,ti->t", uT, Mu) / self.fem.areas
        return Ku, Mu, kappa

    def _scatter_vec(self, local):
        full = np.bincount(self.tris.ravel(), weights=local.ravel(), minlength=self.n_q)
        return full[self.fem.interior]

    def _assemble_uu(self, local):
        data = local.reshape(-1)[self.keep]
        return sp.csr_matrix((data, (self.rows_i, self.cols_i)), shape=(self.n_u, self.n_u))

    def objective(self, x):
        u, q = self.split(x)
        e = self.fem.extend(u) - self.ud
        M = self.fem.M_full
        return 0.5 * float(e @ (M @ e)) + 0.5 * self.gamma * float(q @ (M @ q))

    def objective_derivative(self, x):
        u, q = self.split(x)
        e = self.fem.extend(u) - self.ud
        M = self.fem.M_full
        return np.concatenate([(M @ e)[self.fem.interior], self.gamma * (M @ q)])

    def residual(self, x):
        u, q = self.split(x)
        Ku, _, kappa = self._local(u)
        return self._scatter_vec(kappa[:, None] * Ku) - self.M_Iall @ q

    def jacobian(self, x):
        u, _ = self.split(x)
        Ku, Mu, kappa = self._local(u)
        local = (kappa[:, None, None] * self.fem.K_loc
                 + self.scale[:, None, None] * Ku[:, :, None] * Mu[:, None, :])
        return sp.hstack([self._assemble_uu(local), -self.M_Iall]).tocsr()

    def hessian(self, x, y_shift):
        u, _ = self.split(x)
        Ku, Mu, kappa = self._local(u)
        yT = self.fem.extend(y_shift)[self.tris]
        Ky = np.einsum("tij,tj->ti", self.fem.K_loc, yT)
        s = np.einsum("ti,ti->t", yT, Ku)
        g = self.scale[:, None] * Mu
        local = (g[:, :, None] * Ky[:, None, :] + Ky[:, :, None] * g[:, None, :]
                 + (s * self.scale)[:, None, None] * self.fem.M_loc)
        Huu = self._assemble_uu(local) + self.M_I
        return sp.block_diag([Huu, self.gamma * self.fem.M_full], format="csr")

    def box_riesz_rows(self, x, y_shift):
        return self._rx, self._ry

    def build_riesz_rows(self):
        self._rx = sp.hstack([
            sp.csr_matrix((self.n_q, self.n_u)),
            self.gamma * sp.identity(self.n_q, format="csr"),
        ]).tocsr()
        self._ry = (-self.E).tocsr()


def elliptic_problem(cfg: EllipticConfig) -> ProblemSpec:
    fem = build_fem(cfg.N)
    ops = _EllipticOps(fem, cfg)
    ops.build_riesz_rows()
    lo = fem.interpolate(cfg.q_lower)
    up = fem.interpolate(cfg.q_upper)
    n_u, n_q = ops.n_u, ops.n_q
    metric_u = SpaceMetric(n_u, fem.K)
    metric_q = SpaceMetric(n_q, fem.M_full)
    return ProblemSpec(
        n_x=n_u + n_q,
        n_y=n_u,
        objective=ops.objective,
        objective_derivative=ops.objective_derivative,
        residual=ops.residual,
        residual_jacobian=ops.jacobian,
        lagrangian_hessian=ops.hessian,
        lower=np.concatenate([np.full(n_u, -np.inf), lo]),
        upper=np.concatenate([np.full(n_u, np.inf), up]),
        metric_x=SpaceMetric.block_diag(metric_u, metric_q),
        metric_y=SpaceMetric(n_u, fem.K),
        box_riesz_rows=ops.box_riesz_rows,
        name=f"elliptic_N{cfg.N}_p{cfg.p:g}",
        metadata={"fem": fem, "config": cfg, "ops": ops, "n_u": n_u, "n_q": n_q,
                  "q_lower": lo, "q_upper": up},
    )


def split_solution(z: PrimalDual, spec: ProblemSpec):
    """``(u on all nodes, q on all nodes, y on all nodes)``."""
    fem = spec.metadata["fem"]
    n_u = spec.metadata["n_u"]
    return fem.extend(z.x[:n_u]), z.x[n_u:].copy(), fem.extend(z.y)


def active_flags(z: PrimalDual, spec: ProblemSpec, tol=1e-10):
    """Nodes where ``q`` sits on its lower or upper bound."""
    q = z.x[spec.metadata["n_u"]:]
    lo, up = spec.metadata["q_lower"], spec.metadata["q_upper"]
    return q <= lo + tol * np.maximum(1.0, np.abs(lo)), q >= up - tol * np.maximum(1.0, np.abs(up))


def export_grid_csv(z: PrimalDual, spec: ProblemSpec, path):
    """Write ``x, y, u, q, lower_active, upper_active`` per node."""
    fem = spec.metadata["fem"]
    u, q, _ = split_solution(z, spec)
    at_lo, at_up = active_flags(z, spec)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "u", "q", "lower_active", "upper_active"])
        for k in range(fem.n_nodes):
            w.writerow([f"{fem.nodes[k, 0]:.17g}", f"{fem.nodes[k, 1]:.17g}",
                        f"{u[k]:.17g}", f"{q[k]:.17g}", int(at_lo[k]), int(at_up[k])])
