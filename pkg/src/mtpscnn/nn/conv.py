"""3-D cross-correlation over (frames, height, width) with full channel mixing.

The input is zero-padded and flattened to ``(B*Dp*Hp*Wp, C_in)`` rows in
channels-last order. A kernel tap at offset ``(a, b, c)`` then corresponds
to the contiguous row slice starting at ``a*Hp*Wp + b*Wp + c``, so each tap
is one matrix product. Rows whose window would wrap across an image border
produce garbage that is cropped away afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ..errors import DimensionMismatch
from .tensor import Tensor, from_channels_last, make_node, to_channels_last


def _triple(v):
    if np.isscalar(v):
        return (int(v),) * 3
    t = tuple(int(i) for i in v)
    if len(t) != 3:
        raise DimensionMismatch(f"expected 3 values, got {v!r}")
    return t


@dataclass
class ConvCache:
    """What the backward pass needs from the forward pass."""

    x_shape: tuple
    weight: np.ndarray
    stride: tuple
    padding: tuple
    padded_shape: tuple  # (B, Dp, Hp, Wp)
    out_shape: tuple  # (B, Do, Ho, Wo)
    x_flat: np.ndarray  # padded input, channels-last, with trailing zero rows


def conv_output_shape(size, kernel, stride, padding):
    return tuple((n + 2 * p - k) // s + 1 for n, k, s, p in zip(size, kernel, stride, padding))


def _is_pointwise(kernel, stride, padding):
    return kernel == (1, 1, 1) and stride == (1, 1, 1) and padding == (0, 0, 0)


def conv3d_forward(x, weight, bias=None, stride=1, padding=0):
    """Return ``(out, cache)`` for a strided, zero-padded 3-D cross-correlation.

    ``x`` is ``(B, C_in, D, H, W)``, ``weight`` is ``(C_out, C_in, kD, kH, kW)``
    and ``bias`` is ``None`` or holds ``C_out`` values.
    """
    x = np.asarray(x)
    weight = np.asarray(weight)
    if x.ndim != 5 or weight.ndim != 5:
        raise DimensionMismatch("conv3d expects 5-D input and weight")
    B, ci, D, H, W = x.shape
    co, ci_w, kd, kh, kw = weight.shape
    if ci != ci_w:
        raise DimensionMismatch(f"input has {ci} channels, weight expects {ci_w}")
    kernel = (kd, kh, kw)
    stride = _triple(stride)
    padding = _triple(padding)
    if min(stride) < 1 or min(padding) < 0:
        raise DimensionMismatch("stride must be >= 1 and padding >= 0")
    pd, ph, pw = padding
    Dp, Hp, Wp = D + 2 * pd, H + 2 * ph, W + 2 * pw
    if Dp < kd or Hp < kh or Wp < kw:
        raise DimensionMismatch(f"kernel {kernel} larger than padded input {(Dp, Hp, Wp)}")
    Do, Ho, Wo = conv_output_shape((D, H, W), kernel, stride, padding)
    dtype = np.result_type(x.dtype, weight.dtype)
    xc = to_channels_last(x).astype(dtype, copy=False)

    if _is_pointwise(kernel, stride, padding):
        x_flat = xc.reshape(-1, ci)
        out = x_flat @ np.ascontiguousarray(weight.reshape(co, ci).T, dtype=dtype)
    else:
        n = B * Dp * Hp * Wp
        tail = (kd - 1) * Hp * Wp + (kh - 1) * Wp + (kw - 1)
        x_flat = np.zeros((n + tail, ci), dtype)
        x_flat[:n].reshape(B, Dp, Hp, Wp, ci)[:, pd : pd + D, ph : ph + H, pw : pw + W] = xc
        full = np.empty((n, co), dtype)
        buf = np.empty((n, co), dtype)
        # contiguous (C_in, C_out) taps keep matmul on the BLAS path
        taps = np.ascontiguousarray(weight.transpose(2, 3, 4, 1, 0), dtype=dtype)
        for i, (a, b, c) in enumerate(product(range(kd), range(kh), range(kw))):
            off = a * Hp * Wp + b * Wp + c
            tap = taps[a, b, c]
            if i == 0:
                np.matmul(x_flat[off : off + n], tap, out=full)
            else:
                np.matmul(x_flat[off : off + n], tap, out=buf)
                full += buf
        sd, sh, sw = stride
        out = full.reshape(B, Dp, Hp, Wp, co)[
            :, : (Do - 1) * sd + 1 : sd, : (Ho - 1) * sh + 1 : sh, : (Wo - 1) * sw + 1 : sw
        ]
        out = np.ascontiguousarray(out)
    out = out.reshape(B, Do, Ho, Wo, co)
    if bias is not None:
        out += np.asarray(bias, dtype=dtype).reshape(co)
    cache = ConvCache(x.shape, weight, stride, padding, (B, Dp, Hp, Wp), (B, Do, Ho, Wo), x_flat)
    return from_channels_last(out), cache


def conv3d_backward(grad_out, cache: ConvCache, need_input_grad: bool = True):
    """Exact gradients ``(grad_x, grad_w, grad_b)`` of :func:`conv3d_forward`.

    ``grad_x`` is ``None`` when ``need_input_grad`` is false.
    """
    weight = cache.weight
    co, ci, kd, kh, kw = weight.shape
    B, Do, Ho, Wo = cache.out_shape
    grad_out = np.asarray(grad_out)
    if grad_out.shape != (B, co, Do, Ho, Wo):
        raise DimensionMismatch(f"upstream grad {grad_out.shape} vs output {(B, co, Do, Ho, Wo)}")
    dtype = cache.x_flat.dtype
    g = to_channels_last(grad_out).astype(dtype, copy=False)
    g2 = g.reshape(-1, co)
    grad_b = g2.sum(axis=0)
    kernel = (kd, kh, kw)

    if _is_pointwise(kernel, cache.stride, cache.padding):
        grad_w = (cache.x_flat.T @ g2).T.reshape(weight.shape)
        grad_x = None
        if need_input_grad:
            gx = g2 @ weight.reshape(co, ci).astype(dtype, copy=False)
            grad_x = from_channels_last(gx.reshape(B, Do, Ho, Wo, ci))
        return grad_x, grad_w, grad_b

    _, Dp, Hp, Wp = cache.padded_shape
    n = B * Dp * Hp * Wp
    sd, sh, sw = cache.stride
    g_full = np.zeros((B, Dp, Hp, Wp, co), dtype)
    g_full[:, : (Do - 1) * sd + 1 : sd, : (Ho - 1) * sh + 1 : sh, : (Wo - 1) * sw + 1 : sw] = g
    g_full = g_full.reshape(n, co)

    grad_w = np.empty(weight.shape, dtype)
    x_flat = cache.x_flat
    if need_input_grad:
        gx_flat = np.zeros_like(x_flat)
        buf = np.empty((n, ci), dtype)
        taps = np.ascontiguousarray(weight.transpose(2, 3, 4, 0, 1), dtype=dtype)
    for a, b, c in product(range(kd), range(kh), range(kw)):
        off = a * Hp * Wp + b * Wp + c
        grad_w[:, :, a, b, c] = g_full.T @ x_flat[off : off + n]
        if need_input_grad:
            np.matmul(g_full, taps[a, b, c], out=buf)
            gx_flat[off : off + n] += buf
    grad_x = None
    if need_input_grad:
        _, _, D, H, W = cache.x_shape
        pd, ph, pw = cache.padding
        gx = gx_flat[:n].reshape(B, Dp, Hp, Wp, ci)[:, pd : pd + D, ph : ph + H, pw : pw + W]
        grad_x = from_channels_last(np.ascontiguousarray(gx))
    return grad_x, grad_w, grad_b


def conv3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Differentiable :func:`conv3d_forward`."""
    b = None if bias is None else bias.data
    out, cache = conv3d_forward(x.data, weight.data, b, stride, padding)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gx, gw, gb = conv3d_backward(g, cache, need_input_grad=x.requires_grad)
        if bias is None:
            return gx, gw
        return gx, gw, gb.reshape(bias.shape)

    return make_node(out, parents, backward, "conv3d")
