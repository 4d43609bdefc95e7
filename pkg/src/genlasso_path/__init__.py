"""Solution paths for the generalized lasso via its dual."""
from .backend_base import ConditioningWarning, NumericalFailure
from .general_x import DesignMatrix, RankDeficientDesign, ridge_augment, run_path_general_x
from .generic_backend import GenericBackend
from .graph_backend import GraphBackend
from .operators import (
    BoundaryPartition,
    Custom,
    FusedGraph,
    SparseFusedGraph,
    TrendFilter,
    UnsupportedPenalty,
    build_diff_operator,
    chain_edges,
    grid_edges,
    null_basis,
    nullity,
)
from .path_core import (
    DualSegment,
    PathAborted,
    PathKnot,
    PathRangeError,
    SolutionPath,
    make_backend,
    run_path,
)
from .tf_backend import TrendFilterBackend

__version__ = "0.1.0"

__all__ = [
    "BoundaryPartition", "ConditioningWarning", "Custom", "DesignMatrix", "DualSegment",
    "FusedGraph", "GenericBackend", "GraphBackend", "NumericalFailure", "PathAborted",
    "PathKnot", "PathRangeError", "RankDeficientDesign", "SolutionPath", "SparseFusedGraph",
    "TrendFilter", "TrendFilterBackend", "UnsupportedPenalty", "build_diff_operator",
    "chain_edges", "grid_edges", "make_backend", "null_basis", "nullity", "ridge_augment",
    "run_path", "run_path_general_x",
]
