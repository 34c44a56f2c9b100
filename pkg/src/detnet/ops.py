"""Differentiable operators over :class:`~detnet.tensor.Tensor`.

Only what the backbones need: convolution (with dilation), batch norm,
ReLU, max/average pooling, linear, residual add, nearest upsampling and
softmax cross-entropy.
"""

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .tensor import Tensor, ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9

_recorders = []


@contextmanager
def record_layers():
    """Collect one record per named conv/linear call made inside the block.

    Each record holds the layer name, the actual input/weight/output shapes
    and the multiply-add count derived from them.
    """
    rec = []
    _recorders.append(rec)
    try:
        yield rec
    finally:
        _recorders.remove(rec)


def _record(**entry):
    for rec in _recorders:
        rec.append(entry)


def conv_output_size(size, k, stride, padding, dilation=1):
    return (size + 2 * padding - ((k - 1) * dilation + 1)) // stride + 1


@dataclass
class ConvParams:
    weight: Tensor
    bias: Optional[Tensor] = None
    stride: int = 1
    padding: int = 0
    dilation: int = 1


@dataclass
class BatchNormParams:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = BN_EPS
    momentum: float = BN_MOMENTUM
    mode: str = "training"

    @classmethod
    def identity(cls, c, mode="training", dtype=np.float32):
        return cls(
            gamma=Tensor(np.ones(c, dtype=dtype), requires_grad=True),
            beta=Tensor(np.zeros(c, dtype=dtype), requires_grad=True),
            running_mean=np.zeros(c, dtype=dtype),
            running_var=np.ones(c, dtype=dtype),
            mode=mode,
        )


def _check_rank(x, rank, op):
    if x.data.ndim != rank:
        raise ShapeError(f"{op}: expected rank-{rank} input, got shape {x.shape}", dim="rank")


def conv2d(x, p, name=None):
    """2-D cross-correlation with stride, zero padding and dilation.

    Output extent is ``(h + 2*pad - ((k-1)*dil + 1)) // stride + 1``.
    """
    _check_rank(x, 4, "conv2d")
    w = p.weight
    n, c_in, h, wd = x.shape
    c_out, w_cin, k_h, k_w = w.shape
    if w_cin != c_in:
        raise ShapeError(f"conv2d: input has {c_in} channels, weight expects {w_cin}", dim="c_in")
    if p.stride < 1 or p.dilation < 1 or p.padding < 0:
        raise ShapeError(f"conv2d: invalid stride/dilation/padding {p.stride}/{p.dilation}/{p.padding}", dim="stride")
    if p.bias is not None and p.bias.shape != (c_out,):
        raise ShapeError(f"conv2d: bias shape {p.bias.shape} != ({c_out},)", dim="c_out")
    s, pad, d = p.stride, p.padding, p.dilation
    for dim, size, k in (("h", h, k_h), ("w", wd, k_w)):
        if (k - 1) * d + 1 > size + 2 * pad:
            raise ShapeError(
                f"conv2d: effective kernel {(k - 1) * d + 1} exceeds padded {dim} extent {size + 2 * pad}",
                dim=dim,
            )
    h_out = conv_output_size(h, k_h, s, pad, d)
    w_out = conv_output_size(wd, k_w, s, pad, d)
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    wdat = w.data.astype(x.dtype, copy=False)
    out = kernels.conv2d_forward(xp, wdat, s, d, h_out, w_out)
    if p.bias is not None:
        out += p.bias.data.astype(x.dtype, copy=False)[None, :, None, None]
    if name is not None:
        _record(
            name=name, kind="conv", in_shape=x.shape, weight_shape=w.shape,
            out_shape=out.shape, flops=n * h_out * w_out * c_out * c_in * k_h * k_w,
        )

    def backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            dxp = kernels.conv2d_grad_input(g, wdat, s, d, xp.shape[2], xp.shape[3])
            gx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
        if w.requires_grad:
            gw = kernels.conv2d_grad_weight(g, xp, s, d, k_h, k_w).astype(w.dtype, copy=False)
        if p.bias is not None and p.bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3)).astype(p.bias.dtype, copy=False)
        return gx, gw, gb

    parents = (x, w) if p.bias is None else (x, w, p.bias)
    return Tensor._from_op(out, parents, backward)


def batch_norm(x, p):
    """Per-channel batch normalization.

    ``frozen`` mode normalizes with the stored statistics and never touches
    them.  ``training`` mode uses biased batch statistics and updates the
    running ones as ``new = momentum*old + (1-momentum)*batch``.
    """
    _check_rank(x, 4, "batch_norm")
    c = x.shape[1]
    if p.gamma.shape != (c,):
        raise ShapeError(f"batch_norm: input has {c} channels, parameters have {p.gamma.shape[0]}", dim="c")
    gamma = p.gamma.data.astype(x.dtype, copy=False)[None, :, None, None]
    beta = p.beta.data.astype(x.dtype, copy=False)[None, :, None, None]
    if p.mode == "frozen":
        mean = p.running_mean.astype(x.dtype)[None, :, None, None]
        inv_std = (1.0 / np.sqrt(p.running_var.astype(x.dtype) + x.dtype.type(p.eps)))[None, :, None, None]
        xhat = (x.data - mean) * inv_std
        out = gamma * xhat + beta

        def backward(g):
            gx = g * gamma * inv_std if x.requires_grad else None
            return (gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3)))

    elif p.mode == "training":
        m = x.shape[0] * x.shape[2] * x.shape[3]
        mean = x.data.mean(axis=(0, 2, 3), keepdims=True)
        var = ((x.data - mean) ** 2).mean(axis=(0, 2, 3), keepdims=True)
        inv_std = 1.0 / np.sqrt(var + x.dtype.type(p.eps))
        xhat = (x.data - mean) * inv_std
        out = gamma * xhat + beta
        mom = p.momentum
        p.running_mean[...] = mom * p.running_mean + (1 - mom) * mean.reshape(-1)
        p.running_var[...] = mom * p.running_var + (1 - mom) * var.reshape(-1)

        def backward(g):
            gx = None
            if x.requires_grad:
                dxhat = g * gamma
                s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
                s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
                gx = inv_std / m * (m * dxhat - s1 - xhat * s2)
            return (gx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3)))

    else:
        raise ValueError(f"batch_norm: unknown mode {p.mode!r}")
    return Tensor._from_op(out, (x, p.gamma, p.beta), backward)


def relu(x):
    mask = x.data > 0
    out = np.where(mask, x.data, x.dtype.type(0))
    return Tensor._from_op(out, (x,), lambda g: (g * mask,))


def max_pool(x, k, stride, padding=0):
    """Max pooling with -inf padding; ties route gradient to the lowest index."""
    _check_rank(x, 4, "max_pool")
    if k < 1 or stride < 1:
        raise ValueError(f"max_pool: kernel and stride must be positive, got k={k}, stride={stride}")
    if padding < 0 or 2 * padding > k:
        raise ValueError(f"max_pool: padding {padding} must be in [0, k/2]")
    n, c, h, wd = x.shape
    if k > h + 2 * padding or k > wd + 2 * padding:
        raise ShapeError(f"max_pool: window {k} exceeds padded input {h}x{wd}+{padding}", dim="h")
    h_out = conv_output_size(h, k, stride, padding)
    w_out = conv_output_size(wd, k, stride, padding)
    if padding:
        xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=-np.inf)
    else:
        xp = x.data
    out, arg = kernels.max_pool_forward(xp, k, stride, h_out, w_out)

    def backward(g):
        dxp = kernels.max_pool_backward(g, arg, xp.shape[2], xp.shape[3])
        return (dxp[:, :, padding:padding + h, padding:padding + wd],)

    return Tensor._from_op(out, (x,), backward)


def global_avg_pool(x):
    _check_rank(x, 4, "global_avg_pool")
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)
    return Tensor._from_op(
        out, (x,), lambda g: (np.broadcast_to(g / (h * w), x.shape).astype(x.dtype),)
    )


def flatten(x):
    shape = x.shape
    out = x.data.reshape(shape[0], -1)
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(shape),))


def linear(x, weight, bias=None, name=None):
    """Affine map ``x @ weight.T + bias`` for ``x`` of shape (n, d)."""
    _check_rank(x, 2, "linear")
    classes, d = weight.shape
    if x.shape[1] != d:
        raise ShapeError(f"linear: input width {x.shape[1]} != weight width {d}", dim="d")
    if bias is not None and bias.shape != (classes,):
        raise ShapeError(f"linear: bias shape {bias.shape} != ({classes},)", dim="classes")
    wdat = weight.data.astype(x.dtype, copy=False)
    out = x.data @ wdat.T
    if bias is not None:
        out = out + bias.data.astype(x.dtype, copy=False)
    if name is not None:
        _record(name=name, kind="linear", in_shape=x.shape, weight_shape=weight.shape,
                out_shape=out.shape, flops=x.shape[0] * d * classes)

    def backward(g):
        return (g @ wdat, (g.T @ x.data).astype(weight.dtype, copy=False),
                None if bias is None else g.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._from_op(out, parents, backward)


def add(a, b):
    if a.shape != b.shape:
        dim = next((i for i, (p, q) in enumerate(zip(a.shape, b.shape)) if p != q), "rank")
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ", dim=dim)
    return Tensor._from_op(a.data + b.data, (a, b), lambda g: (g, g))


def upsample_nearest2x(x):
    _check_rank(x, 4, "upsample_nearest2x")
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    n, c, h, w = x.shape
    return Tensor._from_op(
        out, (x,), lambda g: (g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)),)
    )


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    _check_rank(logits, 2, "softmax_cross_entropy")
    labels = np.asarray(labels, dtype=np.int64)
    n, classes = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: {labels.shape[0]} labels for {n} rows", dim="n")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ValueError(f"softmax_cross_entropy: label out of range [0, {classes})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    loss = -logp[np.arange(n), labels].mean()

    def backward(g):
        grad = np.exp(logp)
        grad[np.arange(n), labels] -= 1
        return (grad * (g / n),)

    return Tensor._from_op(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def tensor_sum(x, weights=None):
    """Scalar ``sum(x * weights)``; handy as a probe loss."""
    w = np.ones_like(x.data) if weights is None else np.asarray(weights, dtype=x.dtype)
    out = np.asarray((x.data * w).sum(), dtype=x.dtype)
    return Tensor._from_op(out, (x,), lambda g: (g * w,))


__all__ = [
    "ConvParams", "BatchNormParams", "conv2d", "batch_norm", "relu", "max_pool",
    "global_avg_pool", "flatten", "linear", "add", "upsample_nearest2x",
    "softmax_cross_entropy", "tensor_sum", "record_layers", "conv_output_size",
]
