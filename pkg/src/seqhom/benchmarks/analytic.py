"""Small analytic test problems with Euclidean metrics."""

from __future__ import annotations

import numpy as np

from ..core import PrimalDual, ProblemSpec


def pendulum_problem() -> ProblemSpec:
    """Kinematic pendulum: ``min x2`` on the unit circle.

    Critical points ``(0, -1, 1/2)`` (minimum) and ``(0, 1, -1/2)`` (maximum).
    """

    def hess(x, ys):
        return 2.0 * ys[0] * np.eye(2)

    return ProblemSpec(
        n_x=2,
        n_y=1,
        objective=lambda x: x[1],
        objective_derivative=lambda x: np.array([0.0, 1.0]),
        residual=lambda x: np.array([x[0] ** 2 + x[1] ** 2 - 1.0]),
        residual_jacobian=lambda x: np.array([[2.0 * x[0], 2.0 * x[1]]]),
        lagrangian_hessian=hess,
        name="pendulum",
        metadata={
            "minimum": PrimalDual([0.0, -1.0], [0.5]),
            "maximum": PrimalDual([0.0, 1.0], [-0.5]),
            "start": PrimalDual([0.01, 1.0], [-0.5]),
        },
    )


def scalar_problem() -> ProblemSpec:
    """``min -x^2/2`` subject to ``x = 0``; solution ``(0, 0)``."""
    return ProblemSpec(
        n_x=1,
        n_y=1,
        objective=lambda x: -0.5 * x[0] ** 2,
        objective_derivative=lambda x: np.array([-x[0]]),
        residual=lambda x: np.array([x[0]]),
        residual_jacobian=lambda x: np.array([[1.0]]),
        lagrangian_hessian=lambda x, ys: np.array([[-1.0]]),
        name="scalar",
        metadata={"solution": PrimalDual([0.0], [0.0])},
    )


def scalar_flow_matrix(rho):
    """System matrix of the scalar example's (linear) flow."""
    return np.array([[1.0 - rho, -1.0], [1.0, 0.0]])


def nonconvex_qp_problem() -> ProblemSpec:
    """``min (x1^2 - x2^2)/2`` over ``R x R_{>=0}`` subject to ``x1 = 0``.

    ``(0, 0, 0)`` is critical, yet the objective is unbounded along ``(0, t)``.
    """
    return ProblemSpec(
        n_x=2,
        n_y=1,
        objective=lambda x: 0.5 * (x[0] ** 2 - x[1] ** 2),
        objective_derivative=lambda x: np.array([x[0], -x[1]]),
        residual=lambda x: np.array([x[0]]),
        residual_jacobian=lambda x: np.array([[1.0, 0.0]]),
        lagrangian_hessian=lambda x, ys: np.diag([1.0, -1.0]),
        lower=np.array([-np.inf, 0.0]),
        upper=np.array([np.inf, np.inf]),
        name="nonconvex_qp",
        metadata={"critical": PrimalDual([0.0, 0.0], [0.0])},
    )


def random_qp_problem(n, m, seed=0, bounds=None, definite=False) -> ProblemSpec:
    """Random equality-constrained QP ``1/2 x'Hx - g'x`` s.t. ``Ax = b``.

    ``H`` is symmetric and, unless ``definite``, generally indefinite;
    ``A`` has full row rank.  ``bounds=(lo, up)`` adds a box.
    """
    if m > n:
        raise ValueError("need m <= n")
    rng = np.random.default_rng(seed)
    for _ in range(10):
        A = rng.standard_normal((m, n))
        if np.linalg.matrix_rank(A) == m:
            break
    else:
        raise ValueError("could not draw a full-row-rank constraint matrix")
    B = rng.standard_normal((n, n))
    H = 0.5 * (B + B.T)
    if definite:
        H = B @ B.T / n + np.eye(n)
    g = rng.standard_normal(n)
    b = rng.standard_normal(m)
    lo, up = (None, None) if bounds is None else bounds
    return _qp(H, g, A, b, lo, up, name=f"random_qp_{n}_{m}_{seed}")


def _qp(H, g, A, b, lower=None, upper=None, name="qp"):
    n = H.shape[0]
    return ProblemSpec(
        n_x=n,
        n_y=A.shape[0],
        objective=lambda x: 0.5 * x @ H @ x - g @ x,
        objective_derivative=lambda x: H @ x - g,
        residual=lambda x: A @ x - b,
        residual_jacobian=lambda x: A,
        lagrangian_hessian=lambda x, ys: H,
        lower=lower,
        upper=upper,
        name=name,
        metadata={"H": H, "g": g, "A": A, "b": b},
    )


def qp_problem(H, g, A, b, lower=None, upper=None) -> ProblemSpec:
    """Quadratic program from explicit data."""
    H = np.asarray(H, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    return _qp(H, np.asarray(g, dtype=float), A, np.atleast_1d(np.asarray(b, dtype=float)),
               lower, upper)
