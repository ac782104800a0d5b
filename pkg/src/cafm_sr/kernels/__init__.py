"""Kernel backend dispatch.

Two interchangeable backends implement the hot inner loops: "numba"
(JIT-compiled direct convolutions, the default when numba imports) and
"numpy" (im2col + BLAS). Select with the CAFM_SR_KERNELS environment
variable or temporarily with use_backend(). Both are deterministic; they
differ only in float summation order.
"""

import contextlib
import os

from . import numpy_impl
from ..errors import ConfigError

try:
    from . import numba_impl

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None
    _HAS_NUMBA = False

_IMPLS = {"numpy": numpy_impl}
if _HAS_NUMBA:
    _IMPLS["numba"] = numba_impl

ENV_VAR = "CAFM_SR_KERNELS"


def _default_backend():
    name = os.environ.get(ENV_VAR, "").strip().lower()
    if name:
        if name not in ("numpy", "numba"):
            raise ConfigError(f"unknown kernel backend {name!r} in ${ENV_VAR}")
        if name == "numba" and not _HAS_NUMBA:
            raise ConfigError("numba backend requested but numba is not importable")
        return name
    return "numba" if _HAS_NUMBA else "numpy"


_BACKEND = _default_backend()


def backend_name():
    return _BACKEND


def available_backends():
    return tuple(sorted(_IMPLS))


def set_backend(name):
    global _BACKEND
    if name not in _IMPLS:
        raise ConfigError(f"unknown kernel backend {name!r}")
    _BACKEND = name


@contextlib.contextmanager
def use_backend(name):
    prev = _BACKEND
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def conv2d_forward(x, w, b):
    return _IMPLS[_BACKEND].conv2d_forward(x, w, b)


def conv2d_backward_input(gy, w):
    return _IMPLS[_BACKEND].conv2d_backward_input(gy, w)


def conv2d_backward_weight(x, gy, kh, kw):
    return _IMPLS[_BACKEND].conv2d_backward_weight(x, gy, kh, kw)


def depthwise_forward(x, a, b):
    return _IMPLS[_BACKEND].depthwise_forward(x, a, b)


def depthwise_backward_input(gy, a):
    return _IMPLS[_BACKEND].depthwise_backward_input(gy, a)


def depthwise_backward_kernel(x, gy, kh, kw):
    return _IMPLS[_BACKEND].depthwise_backward_kernel(x, gy, kh, kw)
