"""Numba-compiled convolution kernels (direct-loop path).

Same contracts as numpy_impl: NCHW, stride 1, odd kernels, zero padding
k//2. Inputs are zero-padded once so the hot loops run branch-free over
contiguous rows; 3x3 kernels (the dominant size) get a single-pass
specialization. Every parallel worker owns a disjoint output slice and
accumulation order is fixed per code path, so results are deterministic
run to run.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _pad(x, ph, pw):
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    xp[:, :, ph:ph + h, pw:pw + w] = x
    return xp


@njit(cache=True, parallel=True)
def _conv2d_padded(xp, w, b, h, wd):
    n = xp.shape[0]
    ci = xp.shape[1]
    co, _, kh, kw = w.shape
    out = np.empty((n, co, h, wd), dtype=xp.dtype)
    for nco in prange(n * co):
        ni = nco // co
        o = nco % co
        for i in range(h):
            orow = out[ni, o, i]
            bias = b[o]
            for t in range(wd):
                orow[t] = bias
            for c in range(ci):
                for ky in range(kh):
                    xrow = xp[ni, c, i + ky]
                    for kx in range(kw):
                        wv = w[o, c, ky, kx]
                        for t in range(wd):
                            orow[t] += wv * xrow[t + kx]
    return out


@njit(cache=True, parallel=True)
def _conv2d_padded_k3(xp, w, b, h, wd):
    n = xp.shape[0]
    ci = xp.shape[1]
    co = w.shape[0]
    out = np.empty((n, co, h, wd), dtype=xp.dtype)
    for nco in prange(n * co):
        ni = nco // co
        o = nco % co
        for i in range(h):
            orow = out[ni, o, i]
            bias = b[o]
            for t in range(wd):
                orow[t] = bias
            for c in range(ci):
                for ky in range(3):
                    xrow = xp[ni, c, i + ky]
                    w0 = w[o, c, ky, 0]
                    w1 = w[o, c, ky, 1]
                    w2 = w[o, c, ky, 2]
                    for t in range(wd):
                        orow[t] += w0 * xrow[t] + w1 * xrow[t + 1] \
                            + w2 * xrow[t + 2]
    return out


def conv2d_forward(x, w, b):
    kh, kw = w.shape[2], w.shape[3]
    xp = _pad(x, kh // 2, kw // 2)
    if kh == 3 and kw == 3:
        return _conv2d_padded_k3(xp, w, b, x.shape[2], x.shape[3])
    return _conv2d_padded(xp, w, b, x.shape[2], x.shape[3])


def conv2d_backward_input(gy, w):
    # Correlation of gy with the spatially flipped, transposed kernel.
    wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    zeros = np.zeros(wt.shape[0], dtype=gy.dtype)
    return conv2d_forward(gy, wt, zeros)


@njit(cache=True, parallel=True)
def _conv2d_grad_weight(xp, gy, kh, kw):
    n, co, h, wd = gy.shape
    ci = xp.shape[1]
    gw = np.empty((co, ci, kh, kw), dtype=xp.dtype)
    for o in prange(co):
        s = np.empty(kw, dtype=xp.dtype)
        for c in range(ci):
            for ky in range(kh):
                # one pass per row accumulates all kw taps
                for kx in range(kw):
                    s[kx] = 0.0
                for ni in range(n):
                    for i in range(h):
                        grow = gy[ni, o, i]
                        xrow = xp[ni, c, i + ky]
                        for t in range(wd):
                            g = grow[t]
                            for kx in range(kw):
                                s[kx] += g * xrow[t + kx]
                for kx in range(kw):
                    gw[o, c, ky, kx] = s[kx]
    return gw


@njit(cache=True, parallel=True)
def _conv2d_grad_weight_k3(xp, gy):
    n, co, h, wd = gy.shape
    ci = xp.shape[1]
    gw = np.empty((co, ci, 3, 3), dtype=xp.dtype)
    for o in prange(co):
        for c in range(ci):
            for ky in range(3):
                s0 = xp.dtype.type(0.0)
                s1 = xp.dtype.type(0.0)
                s2 = xp.dtype.type(0.0)
                for ni in range(n):
                    for i in range(h):
                        grow = gy[ni, o, i]
                        xrow = xp[ni, c, i + ky]
                        for t in range(wd):
                            g = grow[t]
                            s0 += g * xrow[t]
                            s1 += g * xrow[t + 1]
                            s2 += g * xrow[t + 2]
                gw[o, c, ky, 0] = s0
                gw[o, c, ky, 1] = s1
                gw[o, c, ky, 2] = s2
    return gw


def conv2d_backward_weight(x, gy, kh, kw):
    xp = _pad(x, kh // 2, kw // 2)
    if kh == 3 and kw == 3:
        return _conv2d_grad_weight_k3(xp, gy)
    return _conv2d_grad_weight(xp, gy, kh, kw)


@njit(cache=True, parallel=True)
def _depthwise_padded(xp, a, b, h, wd):
    n = xp.shape[0]
    c = xp.shape[1]
    kh, kw = a.shape[1], a.shape[2]
    out = np.empty((n, c, h, wd), dtype=xp.dtype)
    for idx in prange(n * c):
        ni = idx // c
        ch = idx % c
        for i in range(h):
            orow = out[ni, ch, i]
            bias = b[ch]
            for t in range(wd):
                orow[t] = bias
            for ky in range(kh):
                xrow = xp[ni, ch, i + ky]
                for kx in range(kw):
                    av = a[ch, ky, kx]
                    for t in range(wd):
                        orow[t] += av * xrow[t + kx]
    return out


def depthwise_forward(x, a, b):
    kh, kw = a.shape[1], a.shape[2]
    xp = _pad(x, kh // 2, kw // 2)
    return _depthwise_padded(xp, a, b, x.shape[2], x.shape[3])


def depthwise_backward_input(gy, a):
    zeros = np.zeros(a.shape[0], dtype=gy.dtype)
    return depthwise_forward(gy, np.ascontiguousarray(a[:, ::-1, ::-1]), zeros)


@njit(cache=True, parallel=True)
def _depthwise_grad_kernel(xp, gy, kh, kw):
    n, c, h, wd = gy.shape
    ga = np.empty((c, kh, kw), dtype=xp.dtype)
    for ch in prange(c):
        s = np.empty(kw, dtype=xp.dtype)
        for ky in range(kh):
            for kx in range(kw):
                s[kx] = 0.0
            for ni in range(n):
                for i in range(h):
                    grow = gy[ni, ch, i]
                    xrow = xp[ni, ch, i + ky]
                    for t in range(wd):
                        g = grow[t]
                        for kx in range(kw):
                            s[kx] += g * xrow[t + kx]
            for kx in range(kw):
                ga[ch, ky, kx] = s[kx]
    return ga


def depthwise_backward_kernel(x, gy, kh, kw):
    xp = _pad(x, kh // 2, kw // 2)
    return _depthwise_grad_kernel(xp, gy, kh, kw)
