"""numba kernels for convolution and max pooling.

Each output pixel is accumulated sequentially in (c_in, k_h, k_w) order in
the input dtype, which makes results bit-identical to the numpy path.
Parallelism is over (batch, channel) pairs only, so the summation order
never depends on the thread count.
"""

import numpy as np
from numba import njit, prange


@njit(parallel=True, cache=True)
def conv2d_forward(xp, w, stride, dilation, h_out, w_out):
    n, c_in = xp.shape[0], xp.shape[1]
    c_out, k_h, k_w = w.shape[0], w.shape[2], w.shape[3]
    out = np.zeros((n, c_out, h_out, w_out), dtype=xp.dtype)
    for job in prange(n * c_out):
        b = job // c_out
        o = job % c_out
        for c in range(c_in):
            for i in range(k_h):
                for j in range(k_w):
                    wv = w[o, c, i, j]
                    for y in range(h_out):
                        row = y * stride + i * dilation
                        for x in range(w_out):
                            out[b, o, y, x] += wv * xp[b, c, row, x * stride + j * dilation]
    return out


@njit(parallel=True, cache=True)
def conv2d_grad_input(g, w, stride, dilation, h_pad, w_pad):
    n, c_out, h_out, w_out = g.shape
    c_in, k_h, k_w = w.shape[1], w.shape[2], w.shape[3]
    dxp = np.zeros((n, c_in, h_pad, w_pad), dtype=g.dtype)
    for job in prange(n * c_in):
        b = job // c_in
        c = job % c_in
        for o in range(c_out):
            for i in range(k_h):
                for j in range(k_w):
                    wv = w[o, c, i, j]
                    for y in range(h_out):
                        row = y * stride + i * dilation
                        for x in range(w_out):
                            dxp[b, c, row, x * stride + j * dilation] += wv * g[b, o, y, x]
    return dxp


@njit(parallel=True, cache=True)
def conv2d_grad_weight(g, xp, stride, dilation, k_h, k_w):
    n, c_out, h_out, w_out = g.shape
    c_in = xp.shape[1]
    dw = np.zeros((c_out, c_in, k_h, k_w), dtype=g.dtype)
    for job in prange(c_out * c_in):
        o = job // c_in
        c = job % c_in
        for i in range(k_h):
            for j in range(k_w):
                acc = dw.dtype.type(0)
                for b in range(n):
                    for y in range(h_out):
                        row = y * stride + i * dilation
                        for x in range(w_out):
                            acc += g[b, o, y, x] * xp[b, c, row, x * stride + j * dilation]
                dw[o, c, i, j] = acc
    return dw


@njit(parallel=True, cache=True)
def max_pool_forward(xp, k, stride, h_out, w_out):
    n, c, _, w_pad = xp.shape
    out = np.empty((n, c, h_out, w_out), dtype=xp.dtype)
    arg = np.empty((n, c, h_out, w_out), dtype=np.int64)
    for job in prange(n * c):
        b = job // c
        ch = job % c
        for y in range(h_out):
            for x in range(w_out):
                r0 = y * stride
                c0 = x * stride
                best = xp[b, ch, r0, c0]
                best_idx = r0 * w_pad + c0
                for i in range(k):
                    for j in range(k):
                        v = xp[b, ch, r0 + i, c0 + j]
                        # strict > keeps the lowest linear index on ties
                        if v > best:
                            best = v
                            best_idx = (r0 + i) * w_pad + c0 + j
                out[b, ch, y, x] = best
                arg[b, ch, y, x] = best_idx
    return out, arg


@njit(parallel=True, cache=True)
def max_pool_backward(g, arg, h_pad, w_pad):
    n, c, h_out, w_out = g.shape
    dxp = np.zeros((n, c, h_pad * w_pad), dtype=g.dtype)
    for job in prange(n * c):
        b = job // c
        ch = job % c
        for y in range(h_out):
            for x in range(w_out):
                dxp[b, ch, arg[b, ch, y, x]] += g[b, ch, y, x]
    return dxp.reshape((n, c, h_pad, w_pad))
