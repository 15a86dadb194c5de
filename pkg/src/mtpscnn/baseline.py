"""Classical Lambertian photometric stereo by per-pixel least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLighting, DimensionMismatch, InsufficientLights
from .geometry import NormalMap

LUMINANCE = np.array([0.2126, 0.7152, 0.0722])


@dataclass
class LambertianSolution:
    normal_map: NormalMap
    albedo: np.ndarray  # (H, W)
    residual: np.ndarray  # (H, W), RMS of I - L^T g


def woodham_solve(images, lights, mask, min_norm: float = 1e-10) -> LambertianSolution:
    """Recover normals and albedo assuming a Lambertian surface.

    Parameters
    ----------
    images : ndarray
        ``(q, H, W, 3)`` linear radiance, already divided by light intensity.
    lights : LightSet or ndarray
        ``q`` unit light directions.
    mask : ndarray
        ``(H, W)`` foreground mask.

    Each RGB observation is reduced to luminance and the scaled normal
    ``g = albedo * n`` is the least-squares solution of ``L g = i``. Pixels
    whose ``|g|`` falls below ``min_norm`` are dropped from the output mask.
    """
    L = np.asarray(getattr(lights, "directions", lights), dtype=np.float64)
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4 or images.shape[-1] != 3:
        raise DimensionMismatch(f"images must be (q, H, W, 3), got {images.shape}")
    q, h, w, _ = images.shape
    if L.shape != (q, 3):
        raise DimensionMismatch(f"{q} frames but light matrix has shape {L.shape}")
    if q < 3:
        raise InsufficientLights(f"need at least 3 lights, got {q}")
    if np.linalg.matrix_rank(L) < 3:
        raise DegenerateLighting("light directions do not span 3-D space")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (h, w):
        raise DimensionMismatch(f"mask {mask.shape} vs images {(h, w)}")

    obs = (images[:, mask] @ LUMINANCE)  # (q, P)
    G = np.linalg.pinv(L) @ obs  # (3, P)
    resid = np.sqrt(np.mean((L @ G - obs) ** 2, axis=0))
    rho = np.linalg.norm(G, axis=0)
    ok = rho >= min_norm

    normals = np.zeros((h, w, 3))
    albedo = np.zeros((h, w))
    residual = np.zeros((h, w))
    n = np.zeros_like(G)
    n[:, ok] = G[:, ok] / rho[ok]
    normals[mask] = n.T
    albedo[mask] = np.where(ok, rho, 0.0)
    residual[mask] = resid
    valid = mask.copy()
    valid[mask] = ok
    return LambertianSolution(NormalMap(normals, valid), albedo, residual)
