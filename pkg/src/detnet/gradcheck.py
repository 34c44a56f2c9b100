"""Central finite-difference gradient checks.

The probe loss is ``sum(out * R)`` with a fixed random ``R``, so every
output element contributes with a distinct weight.  Checks run in float64:
float32 round-off at eps=1e-3 is of the same order as the tolerance.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List

import numpy as np

from . import ops
from .blocks import BlockKind, BlockSpec, make_block
from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_input: List[float] = field(default_factory=list)
    n_checked: int = 0

    def passed(self, tol=1e-3):
        return self.max_rel_error < tol


def rel_error(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def finite_diff_check(fn, inputs, eps=1e-3, seed=0, max_elems=None):
    """Compare analytic gradients of ``fn(*inputs)`` with central differences.

    ``inputs`` are Tensors with ``requires_grad``; their ``data`` arrays are
    perturbed in place and restored.  With ``max_elems`` only that many
    randomly chosen coordinates per input are differenced.
    """
    # separate stream from whatever the caller used to draw the inputs
    rng = np.random.default_rng([seed, 0x6C0])
    out = fn(*inputs)
    probe = rng.standard_normal(out.shape)

    for t in inputs:
        t.grad = None
    ops.tensor_sum(out, probe).backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    def loss():
        return float((fn(*inputs).data * probe).sum())

    per_input, checked = [], 0
    for t, g in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_elems is not None and flat.size > max_elems:
            idx = rng.choice(flat.size, size=max_elems, replace=False)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = loss()
            flat[i] = orig - eps
            fm = loss()
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            worst = max(worst, float(rel_error(g.reshape(-1)[i], num)))
        per_input.append(worst)
        checked += len(idx)
    return GradCheckReport(max(per_input, default=0.0), per_input, checked)


# -- op catalogue ----------------------------------------------------------
#
# Each case builds (fn, inputs) for one seed.  Inputs for ops with kinks
# (relu, max pool) are spaced so no coordinate sits within eps of a kink or
# a tie; central differences are meaningless there.

def _t(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x) + 0.0


def _distinct(rng, shape, spacing=0.05):
    n = int(np.prod(shape))
    return (rng.permutation(n).reshape(shape) - n / 2) * spacing


def _case_conv(rng, dilation=1):
    n, c_in, c_out = 1, 2, 3
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, dilation + 1))
    x = _t(rng.standard_normal((n, c_in, 5 + dilation * 2, 6 + dilation * 2)))
    w = _t(rng.standard_normal((c_out, c_in, k, k)))
    b = _t(rng.standard_normal(c_out))
    p = ops.ConvParams(w, b, stride, pad, dilation)
    return (lambda x, w, b: ops.conv2d(x, p)), [x, w, b]


def _case_bn(rng, mode):
    c = 3
    x = _t(rng.standard_normal((2, c, 3, 4)) * 2 + 1)
    p = ops.BatchNormParams(
        gamma=_t(rng.uniform(0.5, 1.5, c)), beta=_t(rng.standard_normal(c)),
        running_mean=rng.standard_normal(c), running_var=rng.uniform(0.5, 2.0, c), mode=mode,
    )
    return (lambda x, g, b: ops.batch_norm(x, p)), [x, p.gamma, p.beta]


def _case_relu(rng):
    return ops.relu, [_t(_away_from_zero(rng, (2, 3, 4, 4)))]


def _case_max_pool(rng):
    k = int(rng.integers(2, 4))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, k // 2 + 1))
    x = _t(_distinct(rng, (1, 2, 7, 6)))
    return (lambda x: ops.max_pool(x, k, stride, pad)), [x]


def _case_gap(rng):
    return ops.global_avg_pool, [_t(rng.standard_normal((2, 3, 4, 5)))]


def _case_linear(rng):
    x = _t(rng.standard_normal((3, 5)))
    w = _t(rng.standard_normal((4, 5)))
    b = _t(rng.standard_normal(4))
    return ops.linear, [x, w, b]


def _case_add(rng):
    return ops.add, [_t(rng.standard_normal((2, 2, 3, 3))), _t(rng.standard_normal((2, 2, 3, 3)))]


def _case_upsample(rng):
    return ops.upsample_nearest2x, [_t(rng.standard_normal((1, 2, 3, 4)))]


def _case_xent(rng):
    n, k = 4, 5
    labels = rng.integers(0, k, n)
    return (lambda z: ops.softmax_cross_entropy(z, labels)), [_t(rng.standard_normal((n, k)) * 2)]


def block_case(rng, kind, c_in=4, c_mid=2, c_out=4, stride=1, dilation=2, hw=6, bn_mode="training"):
    """Small float64 block with all of its parameters exposed as inputs."""
    spec = BlockSpec(kind, c_in, c_mid, c_out, stride, dilation)
    blk = make_block(spec, rng=rng, dtype=np.float64, bn_mode=bn_mode)
    for _, t in blk.named_parameters():
        t.data[...] += rng.standard_normal(t.shape) * 0.1
    x = _t(rng.standard_normal((2, c_in, hw, hw)))
    params = [t for _, t in blk.named_parameters()]
    return (lambda x, *ps: blk(x)), [x] + params


OP_CASES: Dict[str, Callable] = {
    "conv2d": lambda rng: _case_conv(rng, 1),
    "conv2d_dilated": lambda rng: _case_conv(rng, 2),
    "batch_norm_frozen": lambda rng: _case_bn(rng, "frozen"),
    "batch_norm_training": lambda rng: _case_bn(rng, "training"),
    "relu": _case_relu,
    "max_pool": _case_max_pool,
    "global_avg_pool": _case_gap,
    "linear": _case_linear,
    "add": _case_add,
    "upsample_nearest2x": _case_upsample,
    "softmax_cross_entropy": _case_xent,
}

BLOCK_CASES: Dict[str, Callable] = {
    "block_A": lambda rng: block_case(rng, BlockKind.A),
    "block_B": lambda rng: block_case(rng, BlockKind.B, c_in=3, c_out=4),
    "block_C": lambda rng: block_case(rng, BlockKind.C, c_in=3, c_out=4, stride=2, dilation=1),
}

ALL_CASES = {**OP_CASES, **BLOCK_CASES}

# A block has a dozen ReLUs on a handful of pixels; at eps=1e-3 some probe
# step usually crosses a kink, at 1e-6 (float64) essentially never.
DEFAULT_EPS = {name: (1e-6 if name in BLOCK_CASES else 1e-3) for name in ALL_CASES}


def run_case(name, seed, eps=None):
    fn, inputs = ALL_CASES[name](np.random.default_rng(seed))
    eps = DEFAULT_EPS[name] if eps is None else eps
    return finite_diff_check(fn, inputs, eps=eps, seed=seed)


def network_gradcheck(spec, seed=0, n_params=10, eps=1e-3, input_hw=(64, 64), batch=2, n_classes=10):
    """Finite-difference check of a whole classifier on ``n_params`` sampled
    scalar parameters, with cross-entropy on random labels as the loss."""
    from .arch import build_network

    net = build_network(spec, n_classes=n_classes, seed=seed, dtype=np.float64)
    rng = np.random.default_rng([seed, 0xE2E])
    x = Tensor(rng.standard_normal((batch, spec.in_channels) + tuple(input_hw)), dtype=np.float64)
    labels = rng.integers(0, n_classes, batch)

    def loss():
        return ops.softmax_cross_entropy(net(x), labels)

    named = list(net.named_parameters())
    sizes = np.array([t.data.size for _, t in named])
    picks = rng.choice(sizes.sum(), size=n_params, replace=False)
    bounds = np.cumsum(sizes)
    net.zero_grad()
    loss().backward()
    errors = []
    for flat_idx in sorted(picks):
        k = int(np.searchsorted(bounds, flat_idx, side="right"))
        name, t = named[k]
        i = int(flat_idx - (bounds[k] - sizes[k]))
        flat = t.data.reshape(-1)
        orig = flat[i]
        flat[i] = orig + eps
        fp = loss().item()
        flat[i] = orig - eps
        fm = loss().item()
        flat[i] = orig
        a = t.grad.reshape(-1)[i]
        errors.append((f"{name}[{i}]", float(a), (fp - fm) / (2 * eps)))
    worst = max(float(rel_error(a, b)) for _, a, b in errors)
    return worst, errors
