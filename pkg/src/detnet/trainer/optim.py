"""SGD with momentum and weight decay, plus the step learning-rate schedule
with a constant warmup factor."""

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import List

import numpy as np


@dataclass
class SgdConfig:
    base_lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 1e-4
    warmup_iters: int = 500
    warmup_factor: float = 0.3
    decay_iters: List[int] = field(default_factory=lambda: [120_000, 160_000])
    decay_factor: float = 0.1
    total_iters: int = 180_000

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.decay_iters, self.decay_iters[1:])):
            raise ValueError(f"decay_iters must be strictly increasing: {self.decay_iters}")
        if self.decay_iters and self.decay_iters[-1] >= self.total_iters:
            raise ValueError("decay_iters must all be < total_iters")

    @classmethod
    def detectron_2x(cls):
        """The detector fine-tuning schedule: lr 0.02, x0.1 at 120k and 160k,
        180k total, 500 warmup iterations at 0.3x."""
        return cls()


def lr_at(it, cfg):
    if not 0 <= it < cfg.total_iters:
        raise ValueError(f"iteration {it} outside [0, {cfg.total_iters})")
    if it < cfg.warmup_iters:
        return cfg.base_lr * cfg.warmup_factor
    return cfg.base_lr * cfg.decay_factor ** bisect_right(cfg.decay_iters, it)


def sgd_step(params, grads, momentum_state, lr, cfg, decay_mask=None):
    """One in-place SGD update over parallel lists of arrays.

    ``g' = grad + wd*param; v = momentum*v + g'; param -= lr*v``.  Entries of
    ``decay_mask`` that are False skip weight decay.  Returns
    ``(params, momentum_state)``.
    """
    if not (len(params) == len(grads) == len(momentum_state)):
        raise ValueError("params, grads and momentum_state must have equal length")
    for i, (p, g, v) in enumerate(zip(params, grads, momentum_state)):
        if p.shape != g.shape or p.shape != v.shape:
            raise ValueError(f"shape mismatch at entry {i}: param {p.shape}, grad {g.shape}, state {v.shape}")
        wd = cfg.weight_decay if decay_mask is None or decay_mask[i] else 0.0
        step = g + wd * p if wd else g
        v *= p.dtype.type(cfg.momentum)
        v += step
        p -= p.dtype.type(lr) * v
    return params, momentum_state


class SGD:
    """Holds momentum buffers for a fixed list of named parameter Tensors."""

    def __init__(self, named_params, cfg, decay_filter=None):
        self.names = [n for n, _ in named_params]
        self.tensors = [t for _, t in named_params]
        self.cfg = cfg
        self.momentum = [np.zeros_like(t.data) for t in self.tensors]
        decay_filter = decay_filter or default_decay_filter
        self.decay_mask = [decay_filter(n) for n in self.names]
        self.iteration = 0

    def step(self, lr=None):
        lr = lr_at(self.iteration, self.cfg) if lr is None else lr
        grads = [np.zeros_like(t.data) if t.grad is None else t.grad.astype(t.dtype, copy=False)
                 for t in self.tensors]
        sgd_step([t.data for t in self.tensors], grads, self.momentum, lr, self.cfg, self.decay_mask)
        self.iteration += 1
        return lr

    def state(self):
        return {n: v for n, v in zip(self.names, self.momentum)}


def default_decay_filter(name):
    """Weight decay on conv and linear weights only."""
    return name.endswith(".weight")
