"""Self-contained numeric kernel: dense LP and projected-gradient solvers."""

from .lp import (
    LinearProgram,
    LpResult,
    MaxIterations,
    SolverFailure,
    lp_solve,
)
from .smooth import (
    SmoothProgram,
    SmoothResult,
    project_polyhedron,
    smooth_solve,
)

__all__ = [
    "LinearProgram",
    "LpResult",
    "MaxIterations",
    "SolverFailure",
    "lp_solve",
    "SmoothProgram",
    "SmoothResult",
    "project_polyhedron",
    "smooth_solve",
]
