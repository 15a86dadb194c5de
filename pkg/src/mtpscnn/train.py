"""Training with the cosine loss, and mean-angular-error evaluation."""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Callable, Union

import numpy as np

from .baseline import woodham_solve
from .dataset import DatasetSample, random_crop, subsample_lights
from .errors import InvalidConfig, MissingData, NumericalError
from .geometry import NormalMap, angular_error_map, mean_angular_error
from .model import MTPSCNN, ModelConfig, build_model, estimate_normals, pack_batch
from .nn import Adam, cosine_loss

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    lr_decay: float = 0.5
    lr_decay_every: int = 5
    frames: int = 16  # frames presented per sample; fewer are subsampled
    crop: int = 0  # side of a random training window; 0 uses whole images
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.frames < 1:
            raise InvalidConfig("epochs, batch_size and frames must be >= 1")
        if self.crop < 0:
            raise InvalidConfig("crop must be >= 0")
        if not self.lr >= 0 or not math.isfinite(self.lr):
            raise InvalidConfig("learning rate must be finite and non-negative")
        if self.lr_decay_every < 1 or not self.lr_decay > 0:
            raise InvalidConfig("invalid learning-rate schedule")
        if self.precision not in ("float32", "float64"):
            raise InvalidConfig("precision must be float32 or float64")

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay ** (epoch // self.lr_decay_every)

    def to_dict(self) -> dict:
        return asdict(self)


def _batch_loss(model, samples, rng, dtype):
    """Pooled cosine loss over a batch; samples of different sizes go in separate groups."""
    groups = defaultdict(list)
    for s in samples:
        groups[(s.num_frames,) + tuple(s.size)].append(s)
    total = sum(int(s.mask.sum()) for s in samples)
    loss_value = 0.0
    for group in groups.values():
        x = pack_batch([(s.images, s.lights, s.mask) for s in group], model.config.use_mask, dtype)
        gt = np.stack([s.normals.normals for s in group])
        mask = np.stack([s.mask for s in group])
        loss = cosine_loss(model(x, training=True, rng=rng), gt, mask)
        weight = mask.sum() / total
        (loss * weight).backward()
        loss_value += float(loss.data) * weight
    return loss_value


def train(model: MTPSCNN, dataset, cfg: TrainConfig, on_epoch: Callable | None = None):
    """Minimize the cosine loss with Adam; returns ``(model, epoch_mean_losses)``.

    Mini-batches are reshuffled every epoch from a generator seeded by
    ``cfg.seed``. When a sample has more frames than ``cfg.frames`` a random
    subset (in original order) is used for that step, and ``cfg.crop`` cuts
    a random foreground window out of each sample.
    """
    dataset = list(dataset)
    if not dataset:
        raise MissingData("empty training set")
    for s in dataset:
        if s.normals is None:
            raise MissingData(f"sample {s.name!r} has no ground-truth normals")
    dtype = cfg.dtype
    for p in model.parameters():
        if p.data.dtype != dtype:
            p.data = p.data.astype(dtype)
    opt = Adam(model.parameters(), lr=cfg.lr)
    history = []
    n = len(dataset)
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr_at(epoch)
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(n)
        batch_losses = []
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            batch = []
            for i in order[start : start + cfg.batch_size]:
                s = dataset[i]
                if s.num_frames > cfg.frames:
                    s = subsample_lights(s, cfg.frames, rng)
                if cfg.crop and cfg.crop < min(s.size):
                    s = random_crop(s, cfg.crop, rng)
                batch.append(s)
            opt.zero_grad()
            loss = _batch_loss(model, batch, rng, dtype)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite loss in epoch {epoch}, batch {b}")
            opt.step()
            model.step += 1
            batch_losses.append(loss)
        history.append(float(np.mean(batch_losses)))
        logger.info("epoch %d  lr %.2e  loss %.5f", epoch + 1, opt.lr, history[-1])
        if on_epoch is not None:
            on_epoch(epoch, history[-1])
    return model, history


Estimator = Union[MTPSCNN, Callable[[DatasetSample], NormalMap]]


def baseline_estimator(sample: DatasetSample) -> NormalMap:
    return woodham_solve(sample.images, sample.lights, sample.mask).normal_map


def network_estimator(model: MTPSCNN) -> Callable[[DatasetSample], NormalMap]:
    return lambda s: estimate_normals(model, s.images, s.lights, s.mask)


@dataclass
class EvalReport:
    mae: dict  # object name -> degrees
    error_maps: dict = field(default_factory=dict, repr=False)  # name -> (H, W) degrees

    @property
    def mean(self) -> float:
        return float(np.mean(list(self.mae.values())))

    def lines(self):
        width = max(len(k) for k in self.mae)
        rows = [f"{k:<{width}}  {v:8.3f}" for k, v in self.mae.items()]
        rows.append(f"{'mean':<{width}}  {self.mean:8.3f}")
        return rows


def evaluate(estimator: Estimator, dataset) -> EvalReport:
    """Mean angular error of ``estimator`` on every sample, over the sample's mask.

    Pixels the estimator leaves undetermined (zero normal) count as 90 degrees.
    """
    if isinstance(estimator, MTPSCNN):
        estimator = network_estimator(estimator)
    mae, maps = {}, {}
    for s in dataset:
        if s.normals is None:
            raise MissingData(f"sample {s.name!r} has no ground-truth normals")
        pred = estimator(s)
        gt = s.normals.normals
        name = s.name
        while name in mae:
            name += "'"
        mae[name] = mean_angular_error(pred.normals, gt, s.mask)
        maps[name] = angular_error_map(pred.normals, gt, s.mask)
    if not mae:
        raise MissingData("nothing to evaluate")
    return EvalReport(mae, maps)


def ablate_variants(dataset, base_config: ModelConfig, cfg: TrainConfig, eval_dataset=None, variants=None) -> dict:
    """Train every architecture variant from the same seed and report its mean MAE."""
    from .model import VARIANTS

    eval_dataset = dataset if eval_dataset is None else eval_dataset
    table = {}
    for variant in variants or VARIANTS:
        model = build_model(base_config, dtype=cfg.dtype, variant=variant)
        train(model, dataset, cfg)
        table[variant] = evaluate(model, eval_dataset).mean
        logger.info("%s: %.3f deg", variant, table[variant])
    return table
