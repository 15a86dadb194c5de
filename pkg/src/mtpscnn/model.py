"""The two-stage inter/intra-frame normal estimation network.

Input encoding: every frame contributes its RGB image plus a 3-channel
lighting map (the frame's light direction replicated over the object mask),
giving a ``(B, 6, q, H, W)`` tensor. The network then runs

* an initial pointwise conv 6 -> C with leaky ReLU and dropout,
* IRFE blocks: ``(M, 1, 1)`` convs across adjacent frames + leaky ReLU + dropout,
* IAFE blocks: ``(1, N, N)`` spatial convs + leaky ReLU,
* a max over frames,
* a head of three pointwise convs (C, C, 3) with two leaky ReLUs, then
  per-pixel L2 normalization.

The three variants differ only in how IRFE and IAFE blocks are ordered.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import DimensionMismatch, InvalidConfig
from .geometry import NormalMap
from .nn import functional as F
from .nn.conv import conv3d
from .nn.tensor import Parameter, Tensor, no_grad

LEAKY_SLOPE = 0.1
VARIANTS = ("t-irfe-iafe", "t-iafe-irfe", "m-irfe-iafe")


@dataclass
class ModelConfig:
    variant: str = "t-irfe-iafe"
    K: int = 3  # IRFE blocks
    L: int = 3  # IAFE blocks
    M: int = 3  # frame-kernel extent
    N: int = 3  # spatial-kernel extent
    C: int = 128  # feature width
    dropout_rate: float = 0.2
    seed: int = 0
    use_mask: bool = True  # mask the lighting maps

    def __post_init__(self):
        self.variant = str(self.variant).lower().replace("_", "-")
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise InvalidConfig(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        for name in ("K", "L", "C"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        for name in ("M", "N"):
            v = int(getattr(self, name))
            if v < 1 or v % 2 == 0:
                raise InvalidConfig(f"{name} must be a positive odd integer")
        if self.variant == "m-irfe-iafe" and self.K != self.L:
            raise InvalidConfig("the mixed variant pairs IRFE and IAFE blocks, so K must equal L")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig("dropout_rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def _block_order(cfg: ModelConfig):
    irfe = [("irfe", i) for i in range(1, cfg.K + 1)]
    iafe = [("iafe", i) for i in range(1, cfg.L + 1)]
    if cfg.variant == "t-irfe-iafe":
        return irfe + iafe
    if cfg.variant == "t-iafe-irfe":
        return iafe + irfe
    return [blk for pair in zip(irfe, iafe) for blk in pair]


def parameter_shapes(cfg: ModelConfig):
    """Ordered ``(name, shape)`` pairs; biases are stored as ``(C_out, 1, 1, 1, 1)``."""
    C = cfg.C
    layers = [("initial", (C, 6, 1, 1, 1))]
    layers += [(f"irfe{i}", (C, C, cfg.M, 1, 1)) for i in range(1, cfg.K + 1)]
    layers += [(f"iafe{i}", (C, C, 1, cfg.N, cfg.N)) for i in range(1, cfg.L + 1)]
    layers += [("head1", (C, C, 1, 1, 1)), ("head2", (C, C, 1, 1, 1)), ("head3", (3, C, 1, 1, 1))]
    shapes = []
    for name, wshape in layers:
        shapes.append((f"{name}.weight", wshape))
        shapes.append((f"{name}.bias", (wshape[0], 1, 1, 1, 1)))
    return shapes


class MTPSCNN:
    """Parameters plus wiring for one architecture variant."""

    def __init__(self, config: ModelConfig, params: dict):
        self.config = config
        expected = parameter_shapes(config)
        if [n for n, _ in expected] != list(params):
            raise InvalidConfig("parameter names do not match the configuration")
        for name, shape in expected:
            if params[name].shape != shape:
                raise InvalidConfig(f"{name} has shape {params[name].shape}, expected {shape}")
        self.params = params
        self.step = 0  # optimizer steps taken so far
        self._rng = np.random.default_rng([config.seed, 1])

    def parameters(self):
        return list(self.params.values())

    def named_parameters(self):
        return list(self.params.items())

    @property
    def dtype(self):
        return self.params["initial.weight"].dtype

    def block_order(self):
        return _block_order(self.config)

    def _conv(self, x, name, padding=0):
        return conv3d(x, self.params[f"{name}.weight"], self.params[f"{name}.bias"], padding=padding)

    def __call__(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        return self.forward(x, training, rng)

    def forward(self, x: Tensor, training: bool = False, rng=None) -> Tensor:
        """Map a ``(B, 6, q, H, W)`` input to ``(B, 3, 1, H, W)`` unit normals."""
        cfg = self.config
        if x.ndim != 5 or x.shape[1] != 6:
            raise DimensionMismatch(f"expected a (B, 6, q, H, W) input, got {x.shape}")
        if training and rng is None:
            rng = self._rng
        rng = np.random.default_rng(rng) if training else None
        p = cfg.dropout_rate

        h = F.leaky_relu(self._conv(x, "initial"), LEAKY_SLOPE)
        h = F.dropout(h, p, training, rng)
        for kind, i in self.block_order():
            if kind == "irfe":
                h = F.leaky_relu(self._conv(h, f"irfe{i}", padding=((cfg.M - 1) // 2, 0, 0)), LEAKY_SLOPE)
                h = F.dropout(h, p, training, rng)
            else:
                pad = (cfg.N - 1) // 2
                h = F.leaky_relu(self._conv(h, f"iafe{i}", padding=(0, pad, pad)), LEAKY_SLOPE)
        h = F.framewise_maxpool(h)
        h = F.leaky_relu(self._conv(h, "head1"), LEAKY_SLOPE)
        h = F.leaky_relu(self._conv(h, "head2"), LEAKY_SLOPE)
        h = self._conv(h, "head3")
        return F.l2_normalize_channels(h)


def build_model(config: ModelConfig | None = None, dtype=np.float32, **overrides) -> MTPSCNN:
    """Create a model with variance-preserving Gaussian weights and zero biases."""
    if config is None:
        config = ModelConfig(**overrides)
    elif overrides:
        config = ModelConfig.from_dict({**config.to_dict(), **overrides})
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in parameter_shapes(config):
        if name.endswith(".bias"):
            value = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            std = math.sqrt(2.0 / ((1.0 + LEAKY_SLOPE**2) * fan_in))
            value = (rng.standard_normal(shape) * std).astype(dtype)
        params[name] = Parameter(value, name)
    return MTPSCNN(config, params)


def count_parameters(model: MTPSCNN) -> int:
    return int(sum(p.data.size for p in model.parameters()))


def build_masked_lighting_map(light, mask, height: int | None = None, width: int | None = None) -> np.ndarray:
    """Replicate ``light`` over the foreground of ``mask``; background stays zero.

    Returns an ``(H, W, 3)`` array (channels last, like the image stacks).
    """
    light = np.asarray(light, dtype=np.float64).reshape(3)
    mask = np.asarray(mask, dtype=bool)
    if height is not None and width is not None and mask.shape != (height, width):
        raise DimensionMismatch(f"mask {mask.shape} vs requested size {(height, width)}")
    return mask[..., None] * light


def pack_input(images, lights, mask, masked: bool = True, dtype=np.float32) -> Tensor:
    """Stack images and lighting maps into a ``(1, 6, q, H, W)`` network input.

    Channels 0-2 are the RGB frame, 3-5 the lighting map. With
    ``masked=False`` the light direction fills the whole frame.
    """
    images = np.asarray(images)
    L = np.asarray(getattr(lights, "directions", lights), dtype=np.float64)
    if images.ndim != 4 or images.shape[-1] != 3:
        raise DimensionMismatch(f"images must be (q, H, W, 3), got {images.shape}")
    q, H, W, _ = images.shape
    if L.shape != (q, 3):
        raise DimensionMismatch(f"{q} frames but {L.shape[0]} light directions")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (H, W):
        raise DimensionMismatch(f"mask {mask.shape} vs images {(H, W)}")
    buf = np.empty((1, q, H, W, 6), dtype=dtype)
    buf[0, ..., :3] = images
    if masked:
        buf[0, ..., 3:] = mask[None, :, :, None] * L[:, None, None, :]
    else:
        buf[0, ..., 3:] = L[:, None, None, :]
    return Tensor(buf.transpose(0, 4, 1, 2, 3))


def pack_batch(items, masked: bool = True, dtype=np.float32) -> Tensor:
    """Concatenate ``(images, lights, mask)`` triples of equal size along the batch axis."""
    parts = [pack_input(im, li, m, masked, dtype).data for im, li, m in items]
    shapes = {p.shape for p in parts}
    if len(shapes) != 1:
        raise DimensionMismatch(f"cannot batch inputs of different shapes {sorted(shapes)}")
    cl = np.concatenate([p.transpose(0, 2, 3, 4, 1) for p in parts], axis=0)
    return Tensor(cl.transpose(0, 4, 1, 2, 3))


def forward(model: MTPSCNN, x: Tensor, mask, training: bool = False, rng=None) -> list:
    """Run the network and return one :class:`NormalMap` per batch item."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 2:
        mask = mask[None]
    if training:
        out = model(x, training=True, rng=rng)
    else:
        with no_grad():
            out = model(x, training=False)
    normals = out.data[:, :, 0].transpose(0, 2, 3, 1).astype(np.float64)
    if mask.shape != normals.shape[:3]:
        raise DimensionMismatch(f"mask {mask.shape} vs output {normals.shape[:3]}")
    return [NormalMap(np.where(m[..., None], n, 0.0), m) for n, m in zip(normals, mask)]


def estimate_normals(model: MTPSCNN, images, lights, mask) -> NormalMap:
    """Eval-mode normal map for one object."""
    x = pack_input(images, lights, mask, masked=model.config.use_mask, dtype=model.dtype)
    return forward(model, x, mask)[0]
