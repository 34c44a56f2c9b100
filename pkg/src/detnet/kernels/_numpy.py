"""Pure-numpy kernels with the same signatures as the numba ones.

The forward convolution keeps the (c_in, k_h, k_w) accumulation order of the
numba kernel, so both backends produce identical bits.  The gradient kernels
use tensordot per tap and only agree with numba to rounding.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _tap(arr, i, j, stride, dilation, h_out, w_out):
    r = i * dilation
    c = j * dilation
    return arr[:, :, r:r + stride * (h_out - 1) + 1:stride, c:c + stride * (w_out - 1) + 1:stride]


def conv2d_forward(xp, w, stride, dilation, h_out, w_out):
    n = xp.shape[0]
    c_out, c_in, k_h, k_w = w.shape
    out = np.zeros((n, c_out, h_out, w_out), dtype=xp.dtype)
    for c in range(c_in):
        xc = xp[:, c:c + 1]
        for i in range(k_h):
            for j in range(k_w):
                patch = _tap(xc, i, j, stride, dilation, h_out, w_out)
                out += w[:, c, i, j][None, :, None, None] * patch
    return out


def conv2d_grad_input(g, w, stride, dilation, h_pad, w_pad):
    n, _, h_out, w_out = g.shape
    c_in, k_h, k_w = w.shape[1:]
    dxp = np.zeros((n, c_in, h_pad, w_pad), dtype=g.dtype)
    for i in range(k_h):
        for j in range(k_w):
            contrib = np.einsum("oc,noyx->ncyx", w[:, :, i, j], g)
            _tap(dxp, i, j, stride, dilation, h_out, w_out)[...] += contrib
    return dxp


def conv2d_grad_weight(g, xp, stride, dilation, k_h, k_w):
    h_out, w_out = g.shape[2:]
    dw = np.zeros((g.shape[1], xp.shape[1], k_h, k_w), dtype=g.dtype)
    for i in range(k_h):
        for j in range(k_w):
            patch = _tap(xp, i, j, stride, dilation, h_out, w_out)
            dw[:, :, i, j] = np.tensordot(g, patch, axes=([0, 2, 3], [0, 2, 3]))
    return dw


def max_pool_forward(xp, k, stride, h_out, w_out):
    w_pad = xp.shape[3]
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :h_out, :w_out]
    flat = win.reshape(win.shape[:4] + (k * k,))
    local = flat.argmax(axis=-1)  # first occurrence == lowest linear index
    out = np.take_along_axis(flat, local[..., None], axis=-1)[..., 0]
    rows = np.arange(h_out)[:, None] * stride + local // k
    cols = np.arange(w_out)[None, :] * stride + local % k
    return np.ascontiguousarray(out), (rows * w_pad + cols).astype(np.int64)


def max_pool_backward(g, arg, h_pad, w_pad):
    n, c = g.shape[:2]
    dxp = np.zeros((n * c, h_pad * w_pad), dtype=g.dtype)
    rows = np.repeat(np.arange(n * c), g.shape[2] * g.shape[3])
    np.add.at(dxp, (rows, arg.reshape(-1)), g.reshape(-1))
    return dxp.reshape(n, c, h_pad, w_pad)
