"""Synthetic photometric-stereo data.

Images follow the calibrated image-formation model with an orthographic
camera looking down -z: every foreground pixel is shaded by a parametric
BRDF evaluated at its normal, the light direction and the fixed view
direction ``(0, 0, 1)``. Only attached shadows are modelled.

Image stacks are ``(q, H, W, 3)`` arrays of linear radiance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DimensionMismatch, GeometryError, InvalidConfig
from .geometry import VIEW_DIR, normalize_rows

BRDF_KINDS = ("lambertian", "phong", "blinn_phong")


@dataclass(frozen=True)
class BRDF:
    """Parametric reflectance: a diffuse term plus an optional specular lobe."""

    kind: str = "lambertian"
    albedo: tuple = (1.0, 1.0, 1.0)
    specular: tuple = (0.0, 0.0, 0.0)
    shininess: float = 1.0

    def __post_init__(self):
        kind = self.kind.lower().replace("-", "_")
        if kind == "blinnphong":
            kind = "blinn_phong"
        if kind not in BRDF_KINDS:
            raise InvalidConfig(f"unknown BRDF kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        albedo = _rgb(self.albedo)
        specular = _rgb(self.specular)
        for name, val in (("albedo", albedo), ("specular", specular)):
            if not (np.all(np.isfinite(val)) and np.all(val >= 0)):
                raise InvalidConfig(f"{name} must be finite and non-negative")
        if not (math.isfinite(self.shininess) and self.shininess > 0):
            raise InvalidConfig("shininess must be positive")
        object.__setattr__(self, "albedo", tuple(albedo.tolist()))
        object.__setattr__(self, "specular", tuple(specular.tolist()))


def _rgb(value) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,))
    return arr.copy()


@dataclass(frozen=True)
class Sphere:
    center: tuple  # (column, row) in pixels
    radius: float


@dataclass(frozen=True, eq=False)
class Heightfield:
    heights: np.ndarray  # (H, W) elevation in pixel units
    mask: np.ndarray | None = None


Geometry = Union[Sphere, Heightfield]


@dataclass(frozen=True, eq=False)
class Scene:
    height: int
    width: int
    geometry: Geometry
    brdf: BRDF = field(default_factory=BRDF)

    def normal_map(self):
        """Ground-truth ``(normals, mask)`` for the scene geometry."""
        g = self.geometry
        if isinstance(g, Sphere):
            return sphere_normal_map(self.height, self.width, g.radius, g.center)
        if isinstance(g, Heightfield):
            if g.heights.shape != (self.height, self.width):
                raise DimensionMismatch("heightfield does not match the scene size")
            return heightfield_normal_map(g.heights, g.mask)
        raise GeometryError(f"unsupported geometry {type(g).__name__}")


@dataclass(frozen=True, eq=False)
class LightSet:
    """Unit light directions ``(q, 3)`` and per-light RGB intensities ``(q, 3)``."""

    directions: np.ndarray
    intensities: np.ndarray | None = None

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.directions, dtype=np.float64))
        if d.ndim != 2 or d.shape[1] != 3 or d.shape[0] < 1:
            raise DimensionMismatch(f"light directions must be (q, 3), got {d.shape}")
        if not np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-6):
            raise GeometryError("light directions must be unit vectors")
        if np.any(d[:, 2] <= 0):
            raise GeometryError("light directions must point towards the camera (z > 0)")
        if self.intensities is None:
            inten = np.ones_like(d)
        else:
            inten = np.asarray(self.intensities, dtype=np.float64)
            if inten.ndim == 1:
                inten = inten[:, None]
            inten = np.broadcast_to(inten, d.shape).copy()
            if not (np.all(np.isfinite(inten)) and np.all(inten >= 0)):
                raise InvalidConfig("light intensities must be finite and non-negative")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "intensities", inten)

    def __len__(self) -> int:
        return self.directions.shape[0]

    def subset(self, idx) -> "LightSet":
        return LightSet(self.directions[idx], self.intensities[idx])


def sphere_normal_map(height: int, width: int, radius: float, center=None):
    """Normals and mask of an orthographically viewed sphere.

    ``center`` is ``(column, row)`` and defaults to ``(width // 2, height // 2)``
    so that a pixel sits exactly on the pole. The disc must lie inside the
    frame, counting each pixel as a unit square.
    """
    if center is None:
        center = (width // 2, height // 2)
    cx, cy = float(center[0]), float(center[1])
    if radius <= 0:
        raise GeometryError("sphere radius must be positive")
    if cx - radius < -0.5 or cx + radius > width - 0.5 or cy - radius < -0.5 or cy + radius > height - 0.5:
        raise GeometryError(f"sphere of radius {radius} at {center} does not fit a {height}x{width} frame")
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    x = (cols - cx) / radius
    y = -(rows - cy) / radius
    r2 = x * x + y * y
    mask = r2 < 1.0
    z = np.sqrt(np.clip(1.0 - r2, 0.0, None))
    normals = np.stack([x, y, z], axis=-1)
    normals[~mask] = 0.0
    return normals, mask


def heightfield_normal_map(heights, mask=None):
    """Normals of ``z = heights[row, col]`` from central differences.

    Borders replicate the edge sample, so the one-sided difference there is
    halved. Rows grow downwards while y grows upwards.
    """
    z = np.asarray(heights, dtype=np.float64)
    if z.ndim != 2 or not np.all(np.isfinite(z)):
        raise GeometryError("heightfield must be a finite 2-D array")
    zp = np.pad(z, 1, mode="edge")
    dz_dcol = (zp[1:-1, 2:] - zp[1:-1, :-2]) / 2.0
    dz_drow = (zp[2:, 1:-1] - zp[:-2, 1:-1]) / 2.0
    n = np.stack([-dz_dcol, dz_drow, np.ones_like(z)], axis=-1)
    normals = normalize_rows(n)
    if mask is None:
        mask = np.ones(z.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    normals = np.where(mask[..., None], normals, 0.0)
    return normals, mask


def random_heightfield(height: int, width: int, rng, n_bumps: int = 6, max_slope: float = 3.0):
    """Smooth random terrain built from Gaussian bumps and dents.

    Each bump's amplitude is at most ``max_slope`` times its width. The default
    gives tilts spread over most of the hemisphere (median near 40 degrees,
    90th percentile near 60), so terrain complements spheres as training data.
    """
    rng = np.random.default_rng(rng)
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    z = np.zeros((height, width))
    scale = min(height, width)
    for _ in range(n_bumps):
        cx = rng.uniform(0, width)
        cy = rng.uniform(0, height)
        sigma = rng.uniform(0.08, 0.25) * scale
        amp = rng.uniform(-1.0, 1.0) * sigma * max_slope
        z += amp * np.exp(-((cols - cx) ** 2 + (rows - cy) ** 2) / (2 * sigma**2))
    return z


def shade(brdf: BRDF, normals, light, view=VIEW_DIR) -> np.ndarray:
    """Outgoing RGB radiance for a unit light of intensity 1.

    ``normals`` is ``(..., 3)``; the result is ``(..., 3)``.
    """
    n = np.asarray(normals, dtype=np.float64)
    l = np.asarray(light, dtype=np.float64)
    v = np.asarray(view, dtype=np.float64)
    ndotl = n @ l
    lit = ndotl > 0
    diffuse = np.maximum(ndotl, 0.0)[..., None] * np.asarray(brdf.albedo)
    if brdf.kind == "lambertian":
        return diffuse
    if brdf.kind == "phong":
        r = 2.0 * ndotl[..., None] * n - l
        lobe = np.maximum(r @ v, 0.0)
    else:
        h = l + v
        h = h / np.linalg.norm(h)
        lobe = np.maximum(n @ h, 0.0)
    spec = np.where(lit, lobe**brdf.shininess, 0.0)
    return diffuse + spec[..., None] * np.asarray(brdf.specular)


def shade_pixel(brdf: BRDF, n, l, v=VIEW_DIR) -> np.ndarray:
    """Radiance of a single surface point; see :func:`shade`."""
    return shade(brdf, np.asarray(n, dtype=np.float64), l, v)


def render_stack(scene: Scene, lights: LightSet, dtype=np.float64) -> np.ndarray:
    """Render one frame per light; background pixels are exactly zero."""
    normals, mask = scene.normal_map()
    q = len(lights)
    out = np.zeros((q, scene.height, scene.width, 3), dtype=dtype)
    fg = normals[mask]
    for k in range(q):
        rad = shade(scene.brdf, fg, lights.directions[k]) * lights.intensities[k]
        out[k][mask] = rad
    return out


def sample_light_directions(q: int, max_polar_deg: float = 60.0, seed=None) -> LightSet:
    """Draw ``q`` directions uniformly over the cap of half-angle ``max_polar_deg`` around +z."""
    if q < 1:
        raise InvalidConfig("need at least one light")
    if not 0.0 <= max_polar_deg <= 90.0:
        raise InvalidConfig("max_polar_deg must lie in [0, 90]")
    rng = np.random.default_rng(seed)
    u = rng.random(q)
    phi = rng.uniform(0.0, 2.0 * np.pi, q)
    cos_max = math.cos(math.radians(max_polar_deg))
    z = 1.0 - u * (1.0 - cos_max)
    # z == 0 would put the light on the horizon
    z = np.maximum(z, 1e-6)
    s = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    d = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    return LightSet(normalize_rows(d))
