"""Sparse graph diffusion workbench: SIGN feature banks, Feature Propagation,
directed homophily, color refinement and synthetic benchmarks."""

__version__ = "0.1.0"

from .errors import DataError, GdwError, NumericalError, ShapeError  # noqa: F401
from .graph import Graph, Norm, SparseOperator, build_normalized, spmm, spspmm  # noqa: F401
from .labels import UNKNOWN, LabelVector  # noqa: F401
