"""Convex QP and quadratic-minus-log solvers with certified KKT residuals."""

from .backend import BACKEND_NAME, active_kernels, python_kernels
from .problem import DenseQuad, QpProblem, QpSolution, StructuredQuad, as_quad
from .solver import solve_qp, solve_quad_log

__all__ = [
    "BACKEND_NAME",
    "DenseQuad",
    "QpProblem",
    "QpSolution",
    "StructuredQuad",
    "active_kernels",
    "as_quad",
    "python_kernels",
    "solve_qp",
    "solve_quad_log",
]
