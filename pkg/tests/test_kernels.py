"""Kernel backends against scalar oracles, finite differences, each other."""

import numpy as np
import pytest

from cafm_sr import kernels
from cafm_sr.errors import ConfigError
from cafm_sr.kernels import numpy_impl

BACKENDS = kernels.available_backends()


def naive_conv2d(x, w, b):
    n, ci, h, wd = x.shape
    co, _, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    y = np.zeros((n, co, h, wd), dtype=np.float64)
    for ni in range(n):
        for o in range(co):
            for i in range(h):
                for j in range(wd):
                    acc = float(b[o])
                    for c in range(ci):
                        for ky in range(kh):
                            for kx in range(kw):
                                yy, xx = i + ky - ph, j + kx - pw
                                if 0 <= yy < h and 0 <= xx < wd:
                                    acc += float(w[o, c, ky, kx]) * float(
                                        x[ni, c, yy, xx])
                    y[ni, o, i, j] = acc
    return y


def naive_depthwise(x, a, b):
    n, c, h, wd = x.shape
    _, kh, kw = a.shape
    ph, pw = kh // 2, kw // 2
    y = np.zeros_like(x, dtype=np.float64)
    for ni in range(n):
        for ch in range(c):
            for i in range(h):
                for j in range(wd):
                    acc = float(b[ch])
                    for ky in range(kh):
                        for kx in range(kw):
                            yy, xx = i + ky - ph, j + kx - pw
                            if 0 <= yy < h and 0 <= xx < wd:
                                acc += float(a[ch, ky, kx]) * float(
                                    x[ni, ch, yy, xx])
                    y[ni, ch, i, j] = acc
    return y


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("k", [1, 3, 5, 9])
def test_conv_forward_matches_scalar_oracle(backend, k):
    rng = np.random.default_rng(11)
    x = rng.standard_normal((2, 3, 7, 9)).astype(np.float64)
    w = rng.standard_normal((4, 3, k, k)).astype(np.float64)
    b = rng.standard_normal(4).astype(np.float64)
    ref = naive_conv2d(x, w, b)
    with kernels.use_backend(backend):
        got = kernels.conv2d_forward(x, w, b)
    assert np.abs(got - ref).max() < 1e-10


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("k", [1, 3, 5, 7])
def test_depthwise_matches_scalar_oracle(backend, k):
    rng = np.random.default_rng(5)
    x = rng.standard_normal((2, 4, 6, 8)).astype(np.float64)
    a = rng.standard_normal((4, k, k)).astype(np.float64)
    b = rng.standard_normal(4).astype(np.float64)
    ref = naive_depthwise(x, a, b)
    with kernels.use_backend(backend):
        got = kernels.depthwise_forward(x, a, b)
    assert np.abs(got - ref).max() < 1e-10


@pytest.mark.parametrize("backend", BACKENDS)
def test_conv_backward_matches_finite_differences(backend):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 3, 6, 7))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    gy = rng.standard_normal((2, 4, 6, 7))
    h = 1e-6

    def loss(xx, ww):
        return float((numpy_impl.conv2d_forward(xx, ww, b) * gy).sum())

    with kernels.use_backend(backend):
        gx = kernels.conv2d_backward_input(gy, w)
        gw = kernels.conv2d_backward_weight(x, gy, 3, 3)
    for idx in [(0, 1, 2, 3), (1, 2, 5, 6), (0, 0, 0, 0)]:
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        fd = (loss(xp, w) - loss(xm, w)) / (2 * h)
        assert abs(fd - gx[idx]) < 1e-6
    for idx in [(0, 0, 1, 1), (3, 2, 0, 2)]:
        wp, wm = w.copy(), w.copy()
        wp[idx] += h
        wm[idx] -= h
        fd = (loss(x, wp) - loss(x, wm)) / (2 * h)
        assert abs(fd - gw[idx]) < 1e-5


@pytest.mark.parametrize("backend", BACKENDS)
def test_depthwise_backward_matches_finite_differences(backend):
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 3, 5, 6))
    a = rng.standard_normal((3, 3, 3))
    b = rng.standard_normal(3)
    gy = rng.standard_normal(x.shape)
    h = 1e-6

    def loss(xx, aa):
        return float((numpy_impl.depthwise_forward(xx, aa, b) * gy).sum())

    with kernels.use_backend(backend):
        gx = kernels.depthwise_backward_input(gy, a)
        ga = kernels.depthwise_backward_kernel(x, gy, 3, 3)
    idx = (1, 2, 3, 4)
    xp, xm = x.copy(), x.copy()
    xp[idx] += h
    xm[idx] -= h
    assert abs((loss(xp, a) - loss(xm, a)) / (2 * h) - gx[idx]) < 1e-6
    jdx = (2, 0, 1)
    ap, am = a.copy(), a.copy()
    ap[jdx] += h
    am[jdx] -= h
    assert abs((loss(x, ap) - loss(x, am)) / (2 * h) - ga[jdx]) < 1e-6


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("k", [1, 3, 7])
def test_identity_depthwise_is_exact(backend, k):
    rng = np.random.default_rng(2)
    x = rng.standard_normal((3, 5, 8, 8)).astype(np.float32)
    a = np.zeros((5, k, k), dtype=np.float32)
    a[:, k // 2, k // 2] = 1.0
    b = np.zeros(5, dtype=np.float32)
    with kernels.use_backend(backend):
        y = kernels.depthwise_forward(x, a, b)
    assert np.array_equal(y, x)


@pytest.mark.parametrize("backend", BACKENDS)
def test_kernels_deterministic_across_calls(backend):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((4, 6, 12, 12)).astype(np.float32)
    w = rng.standard_normal((6, 6, 3, 3)).astype(np.float32)
    b = rng.standard_normal(6).astype(np.float32)
    with kernels.use_backend(backend):
        y1 = kernels.conv2d_forward(x, w, b)
        y2 = kernels.conv2d_forward(x, w, b)
        g1 = kernels.conv2d_backward_weight(x, y1, 3, 3)
        g2 = kernels.conv2d_backward_weight(x, y2, 3, 3)
    assert y1.tobytes() == y2.tobytes()
    assert g1.tobytes() == g2.tobytes()


@pytest.mark.skipif(len(BACKENDS) < 2, reason="single backend available")
def test_backends_agree():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 5, 10, 11)).astype(np.float32)
    w = rng.standard_normal((7, 5, 3, 3)).astype(np.float32)
    b = rng.standard_normal(7).astype(np.float32)
    outs = []
    for backend in BACKENDS:
        with kernels.use_backend(backend):
            outs.append(kernels.conv2d_forward(x, w, b))
    assert np.allclose(outs[0], outs[1], rtol=1e-5, atol=1e-5)


def test_backend_selection():
    prev = kernels.backend_name()
    with kernels.use_backend("numpy"):
        assert kernels.backend_name() == "numpy"
    assert kernels.backend_name() == prev
    with pytest.raises(ConfigError):
        kernels.set_backend("tensorflow")
