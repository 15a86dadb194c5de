"""Finite-difference suite over every differentiable operator and a composed network.

Each check draws random float64 inputs from its seed, reduces the operator's
output to a scalar with a seeded random projection and compares backprop
against central differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import functional as F
from .conv import conv3d
from .gradcheck import check_op, finite_diff_check, kink_margin
from .tensor import Tensor, add, mul, tensor_sum

TOLERANCE = 1e-4


def _unit_normals(rng, shape):
    n = rng.standard_normal(shape + (3,))
    return n / np.linalg.norm(n, axis=-1, keepdims=True)


def _check_add(seed):
    rng = np.random.default_rng(seed)
    return check_op(add, [rng.standard_normal((2, 3, 4)), rng.standard_normal((3, 1))], seed)


def _check_mul(seed):
    rng = np.random.default_rng(seed)
    return check_op(mul, [rng.standard_normal((2, 3, 4)), rng.standard_normal((1, 4))], seed)


def _check_sum(seed):
    rng = np.random.default_rng(seed)
    return check_op(tensor_sum, [rng.standard_normal((3, 5))], seed)


def _conv_case(rng):
    B, ci, co = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    kernel = tuple(int(k) for k in rng.integers(1, 4, size=3))
    stride = tuple(int(s) for s in rng.integers(1, 3, size=3))
    padding = tuple(int(rng.integers(0, k)) for k in kernel)
    size = tuple(int(k + rng.integers(0, 3)) for k in kernel)
    x = rng.standard_normal((B, ci) + size)
    w = rng.standard_normal((co, ci) + kernel)
    b = rng.standard_normal((co, 1, 1, 1, 1))
    return [x, w, b], stride, padding


def _check_conv3d(seed):
    rng = np.random.default_rng(seed)
    arrays, stride, padding = _conv_case(rng)
    op = lambda x, w, b: conv3d(x, w, b, stride=stride, padding=padding)  # noqa: E731
    return check_op(op, arrays, seed)


def _check_leaky_relu(seed):
    rng = np.random.default_rng(seed)
    sampler = lambda r: [r.standard_normal((2, 3, 2, 3, 3))]  # noqa: E731
    return check_op(lambda x: F.leaky_relu(x, 0.1), sampler(rng), seed, sampler=sampler)


def _check_dropout(seed):
    rng = np.random.default_rng(seed)
    op = lambda x: F.dropout(x, 0.3, training=True, rng=seed)  # noqa: E731
    return check_op(op, [rng.standard_normal((2, 3, 2, 3, 3))], seed)


def _check_maxpool(seed):
    rng = np.random.default_rng(seed)
    sampler = lambda r: [r.standard_normal((2, 3, 4, 3, 3))]  # noqa: E731
    return check_op(F.framewise_maxpool, sampler(rng), seed, sampler=sampler)


def _check_l2_normalize(seed):
    rng = np.random.default_rng(seed)
    return check_op(F.l2_normalize_channels, [rng.standard_normal((2, 3, 1, 3, 4))], seed)


def _check_cosine_loss(seed):
    rng = np.random.default_rng(seed)
    gt = _unit_normals(rng, (2, 3, 4))
    mask = rng.random((2, 3, 4)) < 0.7
    mask[0, 0, 0] = True
    op = lambda p: F.cosine_loss(p, gt, mask)  # noqa: E731
    return check_op(op, [rng.standard_normal((2, 3, 1, 3, 4))], seed)


def _check_network(seed, max_tries=50):
    """Two-block network with training-mode dropout; every parameter and the input are checked."""
    from ..model import ModelConfig, build_model

    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        cfg = ModelConfig(variant="m-irfe-iafe", K=1, L=1, M=3, N=3, C=3, dropout_rate=0.25,
                          seed=int(rng.integers(2**31)))
        model = build_model(cfg, dtype=np.float64)
        for p in model.parameters():
            if p.data.ndim == 5 and p.name.endswith("bias"):
                p.data[...] = 0.1 * rng.standard_normal(p.shape)
        x = Tensor(rng.standard_normal((1, 6, 3, 4, 4)), requires_grad=True)
        gt = _unit_normals(rng, (1, 4, 4))
        mask = np.ones((1, 4, 4), bool)
        mask[0, 0, :2] = False
        drop_seed = int(rng.integers(2**31))

        def loss(x, *params):
            return F.cosine_loss(model(x, training=True, rng=drop_seed), gt, mask)

        params = model.parameters()
        probe = loss(x, *params)
        if kink_margin(probe) >= 1e-3:
            return finite_diff_check(loss, [x] + params, step=1e-4, order=4)
    raise RuntimeError("could not find a smooth evaluation point for the network check")


CHECKS = {
    "add": _check_add,
    "mul": _check_mul,
    "sum": _check_sum,
    "conv3d": _check_conv3d,
    "leaky_relu": _check_leaky_relu,
    "dropout": _check_dropout,
    "maxpool": _check_maxpool,
    "l2_normalize": _check_l2_normalize,
    "cosine_loss": _check_cosine_loss,
    "network": _check_network,
}


@dataclass
class GradResult:
    op: str
    max_error: float
    seeds: int
    seconds: float

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def run_suite(seeds=range(20), ops=None) -> list:
    """Run the named checks (all by default) for every seed; one result per op."""
    ops = list(CHECKS) if ops is None else list(ops)
    unknown = set(ops) - set(CHECKS)
    if unknown:
        raise KeyError(f"unknown operators: {sorted(unknown)}")
    seeds = list(seeds)
    results = []
    for op in ops:
        t0 = time.perf_counter()
        worst = max(CHECKS[op](s) for s in seeds)
        results.append(GradResult(op, worst, len(seeds), time.perf_counter() - t0))
    return results
