"""Naive nested-loop operators used as test oracles.

Slow by design.  They index the unpadded input directly and accumulate in
Python floats, so they share no code path with the production kernels.
"""

import math

import numpy as np


def conv2d_reference(x, w, bias=None, stride=1, padding=0, dilation=1):
    n, c_in, h, wd = x.shape
    c_out, _, k_h, k_w = w.shape
    h_out = (h + 2 * padding - ((k_h - 1) * dilation + 1)) // stride + 1
    w_out = (wd + 2 * padding - ((k_w - 1) * dilation + 1)) // stride + 1
    out = np.zeros((n, c_out, h_out, w_out), dtype=np.float64)
    for b in range(n):
        for o in range(c_out):
            for y in range(h_out):
                for xx in range(w_out):
                    acc = 0.0 if bias is None else float(bias[o])
                    for c in range(c_in):
                        for i in range(k_h):
                            r = y * stride + i * dilation - padding
                            if r < 0 or r >= h:
                                continue
                            for j in range(k_w):
                                q = xx * stride + j * dilation - padding
                                if 0 <= q < wd:
                                    acc += float(x[b, c, r, q]) * float(w[o, c, i, j])
                    out[b, o, y, xx] = acc
    return out


def max_pool_reference(x, k, stride, padding=0):
    n, c, h, wd = x.shape
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (wd + 2 * padding - k) // stride + 1
    out = np.full((n, c, h_out, w_out), -math.inf)
    for b in range(n):
        for ch in range(c):
            for y in range(h_out):
                for xx in range(w_out):
                    for i in range(k):
                        for j in range(k):
                            r, q = y * stride + i - padding, xx * stride + j - padding
                            if 0 <= r < h and 0 <= q < wd:
                                out[b, ch, y, xx] = max(out[b, ch, y, xx], x[b, ch, r, q])
    return out


def output_size(size, k, stride, padding, dilation=1):
    """Output extent by literal window enumeration (no closed form)."""
    extent = (k - 1) * dilation + 1
    count = 0
    start = -padding
    while start + extent <= size + padding:
        count += 1
        start += stride
    return count
