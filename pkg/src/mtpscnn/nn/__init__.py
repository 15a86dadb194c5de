"""Reverse-mode differentiable operators for the photometric stereo network."""

from .conv import conv3d, conv3d_backward, conv3d_forward
from .functional import cosine_loss, dropout, framewise_maxpool, l2_normalize_channels, leaky_relu
from .gradcheck import finite_diff_check, kink_margin
from .optim import Adam, AdamState, adam_step
from .tensor import Parameter, Tensor, no_grad

__all__ = [
    "Adam",
    "AdamState",
    "Parameter",
    "Tensor",
    "adam_step",
    "conv3d",
    "conv3d_backward",
    "conv3d_forward",
    "cosine_loss",
    "dropout",
    "finite_diff_check",
    "framewise_maxpool",
    "kink_margin",
    "l2_normalize_channels",
    "leaky_relu",
    "no_grad",
]
