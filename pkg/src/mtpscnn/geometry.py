"""Vector helpers, angular metrics and the RGB normal-map encoding.

Normal maps are stored as ``(H, W, 3)`` float arrays in camera coordinates:
x to the right, y up, z towards the viewer, so the viewing direction is
``(0, 0, 1)``. Masks are ``(H, W)`` boolean arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVector, DimensionMismatch, InvalidConfig

VIEW_DIR = np.array([0.0, 0.0, 1.0])

_EPS_NORM = 1e-12


@dataclass
class NormalMap:
    """Per-pixel unit normals and the validity mask they belong to."""

    normals: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.normals = np.asarray(self.normals)
        self.mask = np.asarray(self.mask).astype(bool)
        if self.normals.ndim != 3 or self.normals.shape[-1] != 3:
            raise DimensionMismatch(f"normals must be (H, W, 3), got {self.normals.shape}")
        if self.mask.shape != self.normals.shape[:2]:
            raise DimensionMismatch(
                f"mask shape {self.mask.shape} does not match normals {self.normals.shape[:2]}"
            )

    @property
    def height(self) -> int:
        return self.normals.shape[0]

    @property
    def width(self) -> int:
        return self.normals.shape[1]


def validate_mask(mask) -> np.ndarray:
    """Return ``mask`` as a boolean array, rejecting non-binary or empty masks."""
    m = np.asarray(mask)
    if m.dtype != bool:
        if not np.all((m == 0) | (m == 1)):
            raise InvalidConfig("mask values must be exactly 0 or 1")
        m = m.astype(bool)
    if not m.any():
        raise InvalidConfig("mask must contain at least one foreground pixel")
    return m


def normalize_vec(v) -> np.ndarray:
    """Scale a 3-vector to unit length."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if not n > _EPS_NORM:
        raise DegenerateVector(f"cannot normalize vector with norm {n:g}")
    return v / n


def normalize_rows(v, eps: float = _EPS_NORM) -> np.ndarray:
    """Normalize the last axis of ``v``; rows shorter than ``eps`` become zero."""
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    out = np.zeros_like(v)
    np.divide(v, n, out=out, where=n > eps)
    return out


def angular_error(a, b) -> np.ndarray:
    """Angle in degrees between unit vectors along the last axis.

    Works on single vectors or on stacks of them. Computed as
    ``atan2(|a x b|, a . b)``, which equals ``arccos(clamp(a . b, -1, 1))``
    but is exactly zero for identical vectors and keeps full precision near
    0 and 180 degrees. A zero vector scores 90 degrees.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    dot = np.sum(a * b, axis=-1)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    # a zero vector has no direction; score it as orthogonal, as arccos(0) would
    return np.where((cross == 0) & (dot == 0), 90.0, np.degrees(np.arctan2(cross, dot)))


def mean_angular_error(pred, gt, mask) -> float:
    """Mean of the per-pixel angular error over ``mask == 1`` pixels, in degrees."""
    pred = np.asarray(pred.normals if isinstance(pred, NormalMap) else pred)
    gt = np.asarray(gt.normals if isinstance(gt, NormalMap) else gt)
    mask = np.asarray(mask)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    if mask.shape != pred.shape[:-1]:
        raise DimensionMismatch(f"mask {mask.shape} vs normals {pred.shape[:-1]}")
    mask = validate_mask(mask)
    return float(np.mean(angular_error(pred[mask], gt[mask])))


def angular_error_map(pred, gt, mask) -> np.ndarray:
    """Per-pixel angular error in degrees, zero outside the mask."""
    err = angular_error(pred, gt)
    return np.where(np.asarray(mask, dtype=bool), err, 0.0)


def encode_normal_rgb(normals, mask=None) -> np.ndarray:
    """Map normals to RGB values in [0, 1] via ``(n + 1) / 2``.

    Pixels outside ``mask`` are black.
    """
    normals = np.asarray(normals, dtype=np.float64)
    rgb = np.clip((normals + 1.0) / 2.0, 0.0, 1.0)
    if mask is not None:
        rgb = np.where(np.asarray(mask, dtype=bool)[..., None], rgb, 0.0)
    return rgb


def decode_normal_rgb(image, eps: float = 1e-3) -> NormalMap:
    """Invert :func:`encode_normal_rgb`.

    ``image`` is a float array in [0, 1]. Vectors decoding to a norm below
    ``eps`` (mid-grey or black-ish pixels) are marked invalid.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[-1] != 3:
        raise DimensionMismatch(f"expected a 3-channel image, got {image.shape}")
    raw = 2.0 * image - 1.0
    norm = np.linalg.norm(raw, axis=-1)
    valid = norm > eps
    normals = normalize_rows(raw, eps=eps)
    return NormalMap(normals, valid)


def quantize(values, bits: int) -> np.ndarray:
    """Round values in [0, 1] to unsigned integers of the given bit depth."""
    top = (1 << bits) - 1
    dtype = np.uint8 if bits <= 8 else np.uint16
    return np.round(np.clip(values, 0.0, 1.0) * top).astype(dtype)


def dequantize(values, bits: int | None = None) -> np.ndarray:
    """Map unsigned integer pixels back to floats in [0, 1]."""
    values = np.asarray(values)
    if bits is None:
        bits = 8 if values.dtype == np.uint8 else 16
    return values.astype(np.float64) / ((1 << bits) - 1)
