"""Numerical substrate: seeded RNG, Cholesky, layer gradients, Adam, gradient checking."""

from .adam import AdamState, adam_step
from .gradcheck import grad_check
from .layers import LAYER_KINDS, backward, forward, layer_forward_backward
from .linalg import cholesky_factor
from .rng import RngStream, gaussian_matrix

__all__ = [
    "AdamState",
    "LAYER_KINDS",
    "RngStream",
    "adam_step",
    "backward",
    "cholesky_factor",
    "forward",
    "gaussian_matrix",
    "grad_check",
    "layer_forward_backward",
]
