"""
Reverse-mode automatic differentiation over float64 tensors
"""

from app.autodiff.gradcheck import finite_difference_check, parameter_gradient_check
from app.autodiff.parameter import Parameter, SnapshotError, load_snapshot, save_snapshot
from app.autodiff.tensor import (
    DomainError,
    NonFiniteError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    backward,
)

__all__ = [
    'DomainError', 'NonFiniteError', 'Parameter', 'ShapeError', 'SnapshotError', 'Tape',
    'TapeError', 'Tensor', 'backward', 'finite_difference_check', 'load_snapshot', 'parameter_gradient_check',
    'save_snapshot',
]
