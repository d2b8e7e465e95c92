from .minres import BreakdownError, MinresResult, minres
from .multigrid import MGHierarchy, build_prolongation, build_prolongations, gs_sweep, vcycle
from .operators import RankOneAugmented, SaddleOperator
from .preconditioner import (
    BlockPreconditioner,
    ExactBlockPreconditioner,
    apply_preconditioner,
    block_coefficients,
)

__all__ = [
    "BlockPreconditioner",
    "BreakdownError",
    "ExactBlockPreconditioner",
    "MGHierarchy",
    "MinresResult",
    "RankOneAugmented",
    "SaddleOperator",
    "apply_preconditioner",
    "block_coefficients",
    "build_prolongation",
    "build_prolongations",
    "gs_sweep",
    "minres",
    "vcycle",
]
