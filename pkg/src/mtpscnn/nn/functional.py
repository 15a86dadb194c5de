"""Differentiable activations, pooling, normalization and the training loss."""

from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatch, InvalidConfig
from .tensor import Tensor, make_node

NORM_EPS = 1e-8


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    """``max(slope * x, x)`` for ``0 <= slope < 1``."""
    pos = x.data > 0
    out = np.where(pos, x.data, x.data * x.data.dtype.type(slope))

    def backward(g):
        scale = pos.astype(g.dtype)
        scale *= 1.0 - slope
        scale += slope
        return (g * scale,)

    node = make_node(out, (x,), backward, "leaky_relu")
    node.kink_margin = lambda: float(np.min(np.abs(x.data))) if x.data.size else np.inf
    return node


def _random_like(rng: np.random.Generator, a: np.ndarray) -> np.ndarray:
    """Uniform [0, 1) samples with the same memory layout as ``a``."""
    perm = np.argsort(a.strides, kind="stable")[::-1]
    shape = tuple(a.shape[i] for i in perm)
    dtype = a.dtype if a.dtype in (np.float32, np.float64) else np.float64
    r = rng.random(shape, dtype=dtype)
    return r.transpose(np.argsort(perm))


def dropout(x: Tensor, rate: float, training: bool, rng=None) -> Tensor:
    """Inverted dropout: zero each element with probability ``rate``.

    In eval mode (or with ``rate == 0``) this returns ``x`` unchanged.
    ``rng`` may be a seed or a ``numpy.random.Generator``.
    """
    if not 0.0 <= rate < 1.0:
        raise InvalidConfig(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    rng = np.random.default_rng(rng)
    keep = _random_like(rng, x.data) >= rate
    scale = keep.astype(x.data.dtype)
    scale *= 1.0 / (1.0 - rate)
    out = x.data * scale

    def backward(g):
        return (g * scale,)

    return make_node(out, (x,), backward, "dropout")


def framewise_maxpool(x: Tensor) -> Tensor:
    """Max over the frame axis of a ``(B, C, D, H, W)`` tensor, keeping ``D = 1``.

    The gradient is routed to the first maximal frame of every site.
    """
    if x.ndim != 5:
        raise DimensionMismatch("framewise_maxpool expects a 5-D tensor")
    idx = np.argmax(x.data, axis=2, keepdims=True)
    out = np.take_along_axis(x.data, idx, axis=2)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx, g, axis=2)
        return (gx,)

    def margin():
        if x.shape[2] < 2:
            return np.inf
        top2 = -np.partition(-x.data, 1, axis=2)[:, :, :2]
        return float(np.min(top2[:, :, 0] - top2[:, :, 1]))

    node = make_node(out, (x,), backward, "framewise_maxpool")
    node.kink_margin = margin
    return node


def l2_normalize_channels(x: Tensor, eps: float = NORM_EPS) -> Tensor:
    """Scale each pixel's channel vector to unit length.

    Vectors with norm below ``eps`` map to zero and pass no gradient.
    """
    norm = np.sqrt(np.sum(x.data * x.data, axis=1, keepdims=True))
    valid = ~(norm < eps)  # NaN stays "valid" so it propagates to the loss
    safe = np.where(valid, norm, 1.0)
    out = np.where(valid, x.data / safe, 0.0).astype(x.data.dtype, copy=False)

    def backward(g):
        proj = np.sum(out * g, axis=1, keepdims=True)
        gx = np.where(valid, (g - out * proj) / safe, 0.0)
        return (gx.astype(g.dtype, copy=False),)

    node = make_node(out, (x,), backward, "l2_normalize")
    node.kink_margin = lambda: float(np.min(norm))
    return node


def _normals_to_logical(gt, batch: int) -> np.ndarray:
    """Accept ``(H, W, 3)`` or ``(B, H, W, 3)`` normals; return ``(B, 3, 1, H, W)``."""
    gt = np.asarray(getattr(gt, "normals", gt))
    if gt.ndim == 3:
        gt = gt[None]
    if gt.ndim != 4 or gt.shape[-1] != 3:
        raise DimensionMismatch(f"ground-truth normals must be (B, H, W, 3), got {gt.shape}")
    if gt.shape[0] != batch:
        raise DimensionMismatch(f"{gt.shape[0]} ground-truth maps for a batch of {batch}")
    return gt.transpose(0, 3, 1, 2)[:, :, None]


def cosine_loss(pred: Tensor, gt, mask) -> Tensor:
    """Mean of ``1 - n_pred . n_gt`` over foreground pixels of the whole batch.

    ``pred`` is ``(B, 3, 1, H, W)``; ``gt`` holds ``(B, H, W, 3)`` normals and
    ``mask`` is ``(B, H, W)`` (a single map may drop the batch axis when B=1).
    """
    if pred.ndim != 5 or pred.shape[1] != 3 or pred.shape[2] != 1:
        raise DimensionMismatch(f"prediction must be (B, 3, 1, H, W), got {pred.shape}")
    B, _, _, H, W = pred.shape
    n_gt = _normals_to_logical(gt, B)
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 2:
        mask = mask[None]
    if mask.shape != (B, H, W) or n_gt.shape[-2:] != (H, W):
        raise DimensionMismatch("prediction, ground truth and mask sizes disagree")
    count = int(mask.sum())
    if count == 0:
        raise InvalidConfig("cosine loss needs at least one foreground pixel")
    w = mask[:, None, None].astype(pred.dtype)
    dot = np.sum(pred.data * n_gt, axis=1, keepdims=True)
    loss = np.asarray(np.sum((1.0 - dot) * w) / count, dtype=pred.dtype)

    def backward(g):
        return (((-g / count) * n_gt * w).astype(pred.dtype, copy=False),)

    return make_node(loss, (pred,), backward, "cosine_loss")
