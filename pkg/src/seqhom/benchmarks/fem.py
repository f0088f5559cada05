"""P1 finite elements on a structured triangulation of the unit square."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..linalg import factorize

_MASS_REF = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def _triangles(N):
    """Connectivity of the N x N grid, each cell split along one diagonal.

    The diagonal alternates in a checkerboard pattern, which makes the mesh
    invariant under the reflections ``xi_1 -> 1 - xi_1`` and
    ``xi_2 -> 1 - xi_2`` for even ``N``.
    """
    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    i, j = i.ravel(), j.ravel()
    n00 = i + (N + 1) * j
    n10 = n00 + 1
    n01 = n00 + (N + 1)
    n11 = n01 + 1
    even = (i + j) % 2 == 0
    # even cells: diagonal n00-n11, odd cells: diagonal n10-n01
    t1 = np.where(even[:, None], np.stack([n00, n10, n11], 1), np.stack([n00, n10, n01], 1))
    t2 = np.where(even[:, None], np.stack([n00, n11, n01], 1), np.stack([n10, n11, n01], 1))
    return np.concatenate([t1, t2])


def _local_matrices(nodes, tris):
    p = nodes[tris]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * np.abs(det)
    # barycentric gradients, shape (nT, 3, 2)
    g1 = np.stack([d2[:, 1], -d2[:, 0]], 1) / det[:, None]
    g2 = np.stack([-d1[:, 1], d1[:, 0]], 1) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], 1)
    K = area[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    M = area[:, None, None] * _MASS_REF[None]
    return K, M, area


def _assemble(tris, local, n):
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


@dataclass
class FemAssembly:
    """Mesh, element matrices and global stiffness/mass matrices.

    ``K_full`` and ``M_full`` act on all ``(N+1)^2`` nodes; ``K`` is the
    stiffness matrix restricted to interior nodes (homogeneous Dirichlet
    reduction).  Node ``k = i + (N+1) j`` sits at ``(i h, j h)``.
    """

    N: int
    nodes: np.ndarray
    triangles: np.ndarray
    K_loc: np.ndarray
    M_loc: np.ndarray
    areas: np.ndarray
    K_full: sp.csr_matrix
    M_full: sp.csr_matrix
    interior: np.ndarray
    node_to_interior: np.ndarray
    K: sp.csr_matrix
    _k_factor: object = field(default=None, repr=False)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_interior(self):
        return self.interior.size

    @property
    def h(self):
        return 1.0 / self.N

    def extension(self):
        """Zero extension ``E`` from interior to all nodes, shape (n_nodes, n_interior)."""
        return sp.csr_matrix(
            (np.ones(self.n_interior), (self.interior, np.arange(self.n_interior))),
            shape=(self.n_nodes, self.n_interior),
        )

    def extend(self, u):
        out = np.zeros(self.n_nodes)
        out[self.interior] = u
        return out

    def interpolate(self, f):
        """Nodal interpolation of ``f(xi1, xi2)`` on all nodes."""
        return np.broadcast_to(
            np.asarray(f(self.nodes[:, 0], self.nodes[:, 1]), dtype=float), (self.n_nodes,)
        ).copy()

    def riesz_solve(self, rhs):
        """Apply ``K^{-1}`` (Poisson problem with homogeneous Dirichlet data)."""
        if self._k_factor is None:
            self._k_factor = factorize(self.K)
        return self._k_factor.solve(np.asarray(rhs, dtype=float))


def build_fem(N) -> FemAssembly:
    if int(N) != N or N < 2:
        raise ValueError("N must be an integer >= 2")
    N = int(N)
    xs = np.linspace(0.0, 1.0, N + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    tris = _triangles(N)
    K_loc, M_loc, areas = _local_matrices(nodes, tris)
    n = nodes.shape[0]
    K_full = _assemble(tris, K_loc, n)
    M_full = _assemble(tris, M_loc, n)
    on_boundary = (
        np.isclose(nodes[:, 0], 0.0) | np.isclose(nodes[:, 0], 1.0)
        | np.isclose(nodes[:, 1], 0.0) | np.isclose(nodes[:, 1], 1.0)
    )
    interior = np.flatnonzero(~on_boundary)
    node_to_interior = -np.ones(n, dtype=int)
    node_to_interior[interior] = np.arange(interior.size)
    K = K_full[interior][:, interior].tocsr()
    return FemAssembly(N, nodes, tris, K_loc, M_loc, areas, K_full, M_full,
                       interior, node_to_interior, K)


def riesz_solve(fem: FemAssembly, rhs):
    return fem.riesz_solve(rhs)
