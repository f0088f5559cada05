from .analytic import (
    nonconvex_qp_problem,
    pendulum_problem,
    qp_problem,
    random_qp_problem,
    scalar_flow_matrix,
    scalar_problem,
)
from .elliptic import EllipticConfig, active_flags, elliptic_problem, export_grid_csv, split_solution
from .fem import FemAssembly, build_fem, riesz_solve

__all__ = [
    "nonconvex_qp_problem", "pendulum_problem", "qp_problem", "random_qp_problem",
    "scalar_flow_matrix", "scalar_problem", "EllipticConfig", "elliptic_problem",
    "active_flags", "export_grid_csv", "split_solution", "FemAssembly", "build_fem",
    "riesz_solve",
]
