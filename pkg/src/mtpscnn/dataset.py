"""In-memory samples and the synthetic training/evaluation sets."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, MissingData
from .geometry import NormalMap
from .render import (
    BRDF,
    Heightfield,
    LightSet,
    Scene,
    Sphere,
    random_heightfield,
    render_stack,
    sample_light_directions,
)


@dataclass(eq=False)
class DatasetSample:
    """One object: ``(q, H, W, 3)`` images, their lights, a mask and optional ground truth."""

    images: np.ndarray
    lights: LightSet
    mask: np.ndarray
    normals: NormalMap | None = None
    name: str = "object"

    def __post_init__(self):
        self.images = np.asarray(self.images)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.images.ndim != 4 or self.images.shape[-1] != 3:
            raise DimensionMismatch(f"images must be (q, H, W, 3), got {self.images.shape}")
        if len(self.lights) != self.images.shape[0]:
            raise DimensionMismatch(
                f"{self.images.shape[0]} frames but {len(self.lights)} light directions"
            )
        if self.mask.shape != self.images.shape[1:3]:
            raise DimensionMismatch(f"mask {self.mask.shape} vs images {self.images.shape[1:3]}")
        if self.normals is not None and self.normals.normals.shape[:2] != self.mask.shape:
            raise DimensionMismatch("ground-truth normals do not match the image size")

    @property
    def num_frames(self) -> int:
        return self.images.shape[0]

    @property
    def size(self):
        return self.images.shape[1:3]


def subsample_lights(sample: DatasetSample, k: int, seed=None) -> DatasetSample:
    """Keep ``k`` frames chosen uniformly without replacement, in their original order."""
    q = sample.num_frames
    if not 1 <= k <= q:
        raise InvalidConfig(f"cannot select {k} of {q} frames")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(q, size=k, replace=False))
    return replace(sample, images=sample.images[idx], lights=sample.lights.subset(idx))


def random_crop(sample: DatasetSample, size: int, seed=None) -> DatasetSample:
    """Square window of side ``size`` centred near a random foreground pixel, clamped to the image."""
    H, W = sample.size
    if not 1 <= size <= min(H, W):
        raise InvalidConfig(f"crop {size} does not fit a {H}x{W} image")
    rng = np.random.default_rng(seed)
    ys, xs = np.nonzero(sample.mask)
    if len(ys) == 0:
        raise MissingData(f"sample {sample.name!r} has an empty mask")
    k = rng.integers(len(ys))
    top = int(np.clip(ys[k] - size // 2, 0, H - size))
    left = int(np.clip(xs[k] - size // 2, 0, W - size))
    win = (slice(top, top + size), slice(left, left + size))
    normals = None
    if sample.normals is not None:
        normals = NormalMap(sample.normals.normals[win], sample.normals.mask[win])
    return replace(sample, images=sample.images[(slice(None),) + win], mask=sample.mask[win], normals=normals)


def _random_albedo(rng, low: float, high: float) -> tuple:
    base = np.exp(rng.uniform(np.log(low), np.log(high)))
    tint = rng.uniform(0.8, 1.2, size=3)
    return tuple(np.clip(base * tint, 0.0, 1.0))


def synthetic_sample(
    kind: str,
    rng,
    size: int = 64,
    q: int = 16,
    max_polar_deg: float = 60.0,
    albedo=None,
    albedo_range=(0.05, 1.0),
    specular_range=(0.2, 1.0),
    shininess_range=(8.0, 128.0),
    name: str | None = None,
    dtype=np.float32,
) -> DatasetSample:
    """Render one random object.

    ``kind`` is ``"<brdf>-<shape>"`` with brdf in {lambertian, blinn_phong, phong}
    and shape in {sphere, heightfield}.
    """
    rng = np.random.default_rng(rng)
    brdf_kind, shape = kind.rsplit("-", 1)
    alb = _random_albedo(rng, *albedo_range) if albedo is None else albedo
    if brdf_kind == "lambertian":
        brdf = BRDF("lambertian", alb)
    else:
        spec = rng.uniform(*specular_range)
        shin = float(np.exp(rng.uniform(np.log(shininess_range[0]), np.log(shininess_range[1]))))
        brdf = BRDF(brdf_kind, alb, (spec,) * 3, shin)
    if shape == "sphere":
        radius = rng.uniform(0.28, 0.47) * size
        slack = size / 2 - 0.5 - radius
        cx = size / 2 - 0.5 + rng.uniform(-slack, slack)
        cy = size / 2 - 0.5 + rng.uniform(-slack, slack)
        geometry = Sphere((cx, cy), radius)
    elif shape == "heightfield":
        geometry = Heightfield(random_heightfield(size, size, rng))
    else:
        raise InvalidConfig(f"unknown shape {shape!r}")
    scene = Scene(size, size, geometry, brdf)
    lights = sample_light_directions(q, max_polar_deg, rng)
    images = render_stack(scene, lights).astype(dtype)
    normals, mask = scene.normal_map()
    return DatasetSample(images, lights, mask, NormalMap(normals, mask), name or kind)


def synthetic_dataset(kinds, n: int, seed: int, **kwargs) -> list:
    """``n`` samples cycling through ``kinds``; deterministic given ``seed``."""
    root = np.random.SeedSequence(seed)
    out = []
    for i, child in enumerate(root.spawn(n)):
        kind = kinds[i % len(kinds)]
        out.append(synthetic_sample(kind, np.random.default_rng(child), name=f"{kind}-{i:03d}", **kwargs))
    return out


TRAIN_KINDS = ("lambertian-sphere", "blinn_phong-sphere", "lambertian-heightfield", "blinn_phong-heightfield")
