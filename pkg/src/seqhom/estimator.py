"""Estimator-style front end for the sequential homotopy solver."""

from __future__ import annotations

from dataclasses import fields

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .box import criticality_residual
from .core import PrimalDual, ProblemSpec
from .homotopy import DriverParams, solve


def check_problem(problem) -> ProblemSpec:
    if not isinstance(problem, ProblemSpec):
        raise TypeError(f"expected a ProblemSpec, got {type(problem).__name__}")
    return problem


def check_point(z0, problem: ProblemSpec) -> PrimalDual:
    """Coerce ``z0`` (PrimalDual, stacked vector or None) to a PrimalDual."""
    if z0 is None:
        return PrimalDual.zeros(problem)
    if isinstance(z0, PrimalDual):
        z = z0.copy()
    else:
        v = np.asarray(z0, dtype=float).ravel()
        if v.size != problem.n_x + problem.n_y:
            raise ValueError(
                f"starting vector has length {v.size}, expected {problem.n_x + problem.n_y}"
            )
        z = PrimalDual.from_vector(v, problem.n_x)
    if z.x.shape != (problem.n_x,) or z.y.shape != (problem.n_y,):
        raise ValueError("starting point has wrong dimensions")
    if not z.is_finite():
        raise ValueError("starting point must be finite")
    return z


class SequentialHomotopy(BaseEstimator):
    """Solve ``min phi(x), x in C, c(x) = 0`` by sequential homotopy.

    Hyperparameters mirror :class:`~seqhom.homotopy.DriverParams`.  After
    :meth:`fit` the attributes ``z_``, ``status_``, ``log_``, ``n_mat_``,
    ``n_res_``, ``n_disc_`` and ``criticality_`` are set.
    """

    def __init__(self, theta_cap=0.9, lambda_term=1e-8, lambda_inc=2.0, tol=1e-8,
                 theta_ref=0.5, k_p=0.2, k_i=0.005, lambda_min=1e-12, rho=0.1,
                 lambda_init=1.0, max_inner=60, max_outer=1000, reset_integral=True,
                 curvature_check=True, noise_floor=1e-14):
        self.theta_cap = theta_cap
        self.lambda_term = lambda_term
        self.lambda_inc = lambda_inc
        self.tol = tol
        self.theta_ref = theta_ref
        self.k_p = k_p
        self.k_i = k_i
        self.lambda_min = lambda_min
        self.rho = rho
        self.lambda_init = lambda_init
        self.max_inner = max_inner
        self.max_outer = max_outer
        self.reset_integral = reset_integral
        self.curvature_check = curvature_check
        self.noise_floor = noise_floor

    def driver_params(self) -> DriverParams:
        return DriverParams(**{f.name: getattr(self, f.name) for f in fields(DriverParams)})

    def fit(self, problem, z0=None, callback=None):
        problem = check_problem(problem)
        z = check_point(z0, problem)
        result = solve(problem, z, self.driver_params(), callback=callback)
        self.z_ = result.z
        self.status_ = result.status
        self.log_ = result.log
        self.n_mat_ = result.log.n_mat
        self.n_res_ = result.log.n_res
        self.n_disc_ = result.log.n_disc
        self.criticality_ = criticality_residual(result.z, problem)
        return self

    @property
    def converged_(self):
        check_is_fitted(self, "status_")
        return self.status_ == "solved"

    def solution(self):
        check_is_fitted(self, "z_")
        return self.z_.copy()
