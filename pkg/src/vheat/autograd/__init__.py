"""Minimal dense tensors with reverse-mode differentiation."""

from . import ops
from .gradcheck import NondeterministicError, analytic_grads, grad_check
from .tensor import NonFiniteError, Node, Tape, Tensor, active_tape, as_tensor

__all__ = [
    "NonFiniteError",
    "NondeterministicError",
    "Node",
    "Tape",
    "Tensor",
    "active_tape",
    "analytic_grads",
    "as_tensor",
    "grad_check",
    "ops",
]
