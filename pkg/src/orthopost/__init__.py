"""Post-processing and Galerkin-orthogonal reconstruction for interior penalty DG.

u_h solves the symmetric interior penalty problem, u* is a SIAC (1D) or
patch-recovery (2D) reconstruction of it, and u** = u* - R u* + u_h
restores Galerkin orthogonality through one extra solve with the same
matrix.  Residual estimators R_h and R** drive adaptive refinement.
"""

from .adapt import AdaptHistory, adapt_loop, mark
from .estimate import EstimatorReport, estimate
from .ipdg import DiffusionSpec, LinearSolver, PenaltySpec, apply_form, assemble_load, assemble_matrix
from .mesh import IntervalMesh, TriMesh, lshape, structured_square, uniform_interval
from .ortho import ImprovedReconstruction, improve, ritz_project
from .pipeline import PostSpec, solve_level
from .problems import catalog, get_problem
from .siac import KernelSpec, MirrorExtension, convolve, default_kernel
from .space import DiscreteField, PolySpace, error_norms
from .spr import recover

__all__ = [
    "AdaptHistory",
    "DiffusionSpec",
    "DiscreteField",
    "EstimatorReport",
    "ImprovedReconstruction",
    "IntervalMesh",
    "KernelSpec",
    "LinearSolver",
    "MirrorExtension",
    "PenaltySpec",
    "PolySpace",
    "PostSpec",
    "TriMesh",
    "adapt_loop",
    "apply_form",
    "assemble_load",
    "assemble_matrix",
    "catalog",
    "convolve",
    "default_kernel",
    "error_norms",
    "estimate",
    "get_problem",
    "improve",
    "lshape",
    "mark",
    "recover",
    "ritz_project",
    "solve_level",
    "structured_square",
    "uniform_interval",
]
