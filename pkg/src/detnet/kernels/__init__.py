"""Hot kernels, dispatched to numba or numpy according to the active backend."""

import numpy as np

from .._accel import HAS_NUMBA, get_backend
from . import _numpy

if HAS_NUMBA:
    from . import _numba
else:  # pragma: no cover
    _numba = _numpy

__all__ = [
    "conv2d_forward",
    "conv2d_grad_input",
    "conv2d_grad_weight",
    "max_pool_forward",
    "max_pool_backward",
]


def _impl():
    return _numba if get_backend() == "numba" else _numpy


def _c(a):
    return np.ascontiguousarray(a)


def conv2d_forward(xp, w, stride, dilation, h_out, w_out):
    return _impl().conv2d_forward(_c(xp), _c(w), stride, dilation, h_out, w_out)


def conv2d_grad_input(g, w, stride, dilation, h_pad, w_pad):
    return _impl().conv2d_grad_input(_c(g), _c(w), stride, dilation, h_pad, w_pad)


def conv2d_grad_weight(g, xp, stride, dilation, k_h, k_w):
    return _impl().conv2d_grad_weight(_c(g), _c(xp), stride, dilation, k_h, k_w)


def max_pool_forward(xp, k, stride, h_out, w_out):
    return _impl().max_pool_forward(_c(xp), k, stride, h_out, w_out)


def max_pool_backward(g, arg, h_pad, w_pad):
    return _impl().max_pool_backward(_c(g), _c(arg), h_pad, w_pad)
