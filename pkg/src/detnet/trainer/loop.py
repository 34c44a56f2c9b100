"""Toy classification training loop."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .. import ops
from ..layers import BatchNorm2d
from ..tensor import Tensor, no_grad
from .checkpoint import Checkpoint, checkpoint_from
from .data import hflip
from .optim import SGD, default_decay_filter, lr_at

logger = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class TrainReport:
    losses: List[float] = field(default_factory=list)
    accuracy: List[tuple] = field(default_factory=list)  # (iteration, train accuracy)
    checkpoint: Optional[Checkpoint] = None

    @property
    def final_accuracy(self):
        return self.accuracy[-1][1] if self.accuracy else float("nan")


def evaluate(net, dataset, batch_size=100):
    """Top-1 accuracy with batch norm on its running statistics."""
    modes = [(m, m.params.mode) for _, m in net.named_modules() if isinstance(m, BatchNorm2d)]
    net.set_bn_mode("frozen")
    correct = 0
    try:
        with no_grad():
            for i in range(0, len(dataset), batch_size):
                logits = net(Tensor(dataset.images[i:i + batch_size])).data
                correct += int((logits.argmax(axis=1) == dataset.labels[i:i + batch_size]).sum())
    finally:
        for m, mode in modes:
            m.params.mode = mode
    return correct / len(dataset)


def trainable_parameters(net, freeze_bn=False, freeze_stage1=False):
    out = []
    for name, t in net.named_parameters():
        if freeze_stage1 and name.startswith(net.stage_names[0] + "."):
            continue
        if freeze_bn and (name.endswith(".gamma") or name.endswith(".beta")):
            continue
        out.append((name, t))
    return out


def train_loop(net, dataset, cfg, batch_size, seed=0, freeze_bn=False, freeze_stage1=False,
               flip=False, eval_every=250, decay_bn=False, target_accuracy=None):
    """Train ``net`` with SGD under ``cfg`` for ``cfg.total_iters`` steps.

    Batches come from a seeded permutation reshuffled every epoch.
    ``freeze_bn`` keeps batch norm on its stored statistics and its affine
    parameters fixed; ``freeze_stage1`` fixes the stem.  Training stops early
    once ``target_accuracy`` is reached at an evaluation point.
    """
    rng = np.random.default_rng(seed)
    if freeze_bn:
        net.set_bn_mode("frozen")
    params = trainable_parameters(net, freeze_bn, freeze_stage1)
    decay_filter = (lambda n: True) if decay_bn else default_decay_filter
    opt = SGD(params, cfg, decay_filter)
    report = TrainReport()
    order, pos = rng.permutation(len(dataset)), 0
    for it in range(cfg.total_iters):
        if pos + batch_size > len(dataset):
            order, pos = rng.permutation(len(dataset)), 0
        idx = order[pos:pos + batch_size]
        pos += batch_size
        images = dataset.images[idx]
        if flip:
            mask = rng.random(len(idx)) < 0.5
            images = np.where(mask[:, None, None, None], hflip(images), images)
        net.zero_grad()
        loss = ops.softmax_cross_entropy(net(Tensor(images)), dataset.labels[idx])
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDiverged(f"loss became {value} at iteration {it} (lr={lr_at(it, cfg)})")
        loss.backward()
        opt.step()
        report.losses.append(value)
        last = it == cfg.total_iters - 1
        if (it + 1) % eval_every == 0 or last:
            acc = evaluate(net, dataset)
            report.accuracy.append((it + 1, acc))
            logger.info("iter %d loss %.4f train acc %.4f", it + 1, value, acc)
            if target_accuracy is not None and acc >= target_accuracy:
                break
    report.checkpoint = checkpoint_from(net, opt)
    return report
