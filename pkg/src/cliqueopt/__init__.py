"""Clique-structured trajectory optimization with Gauss-Newton Hessians."""

from .banded import BlockBandedMatrix, FactorizationError, banded_cholesky_solve
from .trajectory import (
    CliqueIndexing,
    FiniteDiffOperator,
    Trajectory,
    apply_fd,
    extract_clique,
    make_fd_operator,
    scatter_clique,
)

__version__ = "0.1.0"

__all__ = [
    "BlockBandedMatrix",
    "CliqueIndexing",
    "FactorizationError",
    "FiniteDiffOperator",
    "Trajectory",
    "apply_fd",
    "banded_cholesky_solve",
    "extract_clique",
    "make_fd_operator",
    "scatter_clique",
]
