"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionMismatch, NumericalError
from .tensor import Tensor


def _array(p) -> np.ndarray:
    return p.data if isinstance(p, Tensor) else np.asarray(p)


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter, and the step count."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def for_params(cls, params):
        arrays = [_array(p) for p in params]
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], 0)


def adam_step(params, grads, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    """Apply one Adam update in place and return ``state``.

    ``params`` are arrays or :class:`Parameter` objects; ``grads`` align with
    them (``None`` counts as a zero gradient).
    """
    arrays = [_array(p) for p in params]
    if not state.m:
        fresh = AdamState.for_params(arrays)
        state.m, state.v = fresh.m, fresh.v
    if not (len(arrays) == len(grads) == len(state.m)):
        raise DimensionMismatch("params, grads and optimizer state are misaligned")
    grads = [np.zeros_like(a) if g is None else np.asarray(g) for a, g in zip(arrays, grads)]
    for a, g, m in zip(arrays, grads, state.m):
        if g.shape != a.shape or m.shape != a.shape:
            raise DimensionMismatch(f"gradient shape {g.shape} vs parameter {a.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient")
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        a -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(a.dtype, copy=False)
    return state


class Adam:
    """Optimizer object around :func:`adam_step` for a fixed parameter list."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState.for_params(self.params)

    def step(self):
        grads = [p.grad for p in self.params]
        adam_step(self.params, grads, self.state, self.lr, self.betas[0], self.betas[1], self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None
