"""Discrete k-skeleton maximal operators on dyadic grids.

Modules: :mod:`~skelmax.grid` (fields, prefix sums, norms),
:mod:`~skelmax.skeleton` (faces and their neighborhoods), :mod:`~skelmax.maxop`
(operators), :mod:`~skelmax.selection` (greedy plane selection),
:mod:`~skelmax.extremal` (small unions), :mod:`~skelmax.normlab` (norm scans
and inequality checks), :mod:`~skelmax.cli` (experiment runner).
"""

__version__ = "0.1.0"

from ._kernels import backend
from .errors import DominationError, HypothesisViolated, SkelmaxError
from .grid import Box, GridSpec, PrefixSumTable, ScalarField, box_sum, build_prefix, lp_norm, seven_q0, unit_q0
from .maxop import (
    FaceAssignment,
    RadiusFunction,
    build_dominating_rho,
    evaluate_dyadic,
    evaluate_linearized,
    evaluate_restricted,
    evaluate_unrestricted,
)
from .skeleton import FaceId, Skeleton, SkeletonConfig, enumerate_faces

__all__ = [
    "__version__", "backend",
    "SkelmaxError", "DominationError", "HypothesisViolated",
    "Box", "GridSpec", "PrefixSumTable", "ScalarField", "box_sum", "build_prefix", "lp_norm",
    "seven_q0", "unit_q0",
    "FaceAssignment", "RadiusFunction", "build_dominating_rho", "evaluate_dyadic",
    "evaluate_linearized", "evaluate_restricted", "evaluate_unrestricted",
    "FaceId", "Skeleton", "SkeletonConfig", "enumerate_faces",
]
