"""Pure-numpy convolution kernels (BLAS-backed im2col path).

All kernels take NCHW float arrays, stride 1, odd kernel sizes, zero padding
of k//2 so spatial dims are preserved. This is the fallback backend when
numba is unavailable or disabled via CAFM_SR_KERNELS=numpy.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pad(x, ph, pw):
    if ph == 0 and pw == 0:
        return x
    n, c, h, w = x.shape
    xp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
    xp[:, :, ph:ph + h, pw:pw + w] = x
    return xp


def _im2col(x, kh, kw):
    """(N*H*W, Ci*kh*kw) patch matrix for same-padded stride-1 conv."""
    n, ci, h, w = x.shape
    xp = _pad(x, kh // 2, kw // 2)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # N,Ci,H,W,kh,kw
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, ci * kh * kw)
    return np.ascontiguousarray(cols)


def conv2d_forward(x, w, b):
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    cols = _im2col(x, kh, kw)
    y = cols @ w.reshape(co, -1).T
    y += b
    return np.ascontiguousarray(
        y.reshape(n, h, wd, co).transpose(0, 3, 1, 2))


def conv2d_backward_input(gy, w):
    # Correlation of gy with the spatially flipped, transposed kernel.
    wt = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    zeros = np.zeros(wt.shape[0], dtype=gy.dtype)
    return conv2d_forward(gy, wt, zeros)


def conv2d_backward_weight(x, gy, kh, kw):
    n, ci, h, w = x.shape
    co = gy.shape[1]
    cols = _im2col(x, kh, kw)
    gmat = np.ascontiguousarray(
        gy.transpose(0, 2, 3, 1).reshape(n * h * w, co))
    return (gmat.T @ cols).reshape(co, ci, kh, kw)


def depthwise_forward(x, a, b):
    n, c, h, w = x.shape
    _, kh, kw = a.shape
    xp = _pad(x, kh // 2, kw // 2)
    y = np.zeros_like(x)
    # k*k shifted accumulations keep memory flat and the sum order fixed
    for ky in range(kh):
        for kx in range(kw):
            y += a[None, :, ky, kx, None, None] * xp[:, :, ky:ky + h, kx:kx + w]
    y += b[None, :, None, None]
    return y


def depthwise_backward_input(gy, a):
    zeros = np.zeros(a.shape[0], dtype=gy.dtype)
    return depthwise_forward(gy, a[:, ::-1, ::-1], zeros)


def depthwise_backward_kernel(x, gy, kh, kw):
    c = x.shape[1]
    xp = _pad(x, kh // 2, kw // 2)
    h, w = x.shape[2], x.shape[3]
    ga = np.empty((c, kh, kw), dtype=x.dtype)
    for ky in range(kh):
        for kx in range(kw):
            ga[:, ky, kx] = np.einsum(
                "nchw,nchw->c", gy, xp[:, :, ky:ky + h, kx:kx + w]
            )
    return ga
