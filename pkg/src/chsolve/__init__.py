"""Mixed P2 finite element solver for the Cahn-Hilliard equation.

The time stepping is a second-order convex splitting; every Newton step
solves a symmetric saddle-point system with MINRES and a block-diagonal
multigrid preconditioner.
"""
from .fem import P2Space
from .mesh import Mesh, MeshHierarchy, build_hierarchy, refine_uniform, unit_square_initial_mesh
from .presets import InitialCondition, get_preset
from .scheme import RunResult, SchemeParams, SchemeState, StepRecord, run

__version__ = "0.1.0"

__all__ = [
    "InitialCondition",
    "Mesh",
    "MeshHierarchy",
    "P2Space",
    "RunResult",
    "SchemeParams",
    "SchemeState",
    "StepRecord",
    "build_hierarchy",
    "get_preset",
    "refine_uniform",
    "run",
    "unit_square_initial_mesh",
]
