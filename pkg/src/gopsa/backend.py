"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. Set ``GOPSA_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("GOPSA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND


def available_backends():
    """Names of the kernel modules importable in this environment."""
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name=None):
    """Return a kernel module by name (``None`` gives the active one)."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def _prepare(X, W):
    X = np.ascontiguousarray(X, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    return X.reshape(-1, X.shape[-2], X.shape[-1]), W


def whiten_logm(X, W, backend=None):
    """``log(W X W)`` for a stack of SPD matrices ``X`` and symmetric ``W``."""
    shape = np.shape(X)
    X3, W = _prepare(X, W)
    out = np.empty_like(X3)
    if len(X3):
        get_backend(backend).whiten_logm(X3, W, out)
    return out.reshape(shape)


def whiten_logm_uvect(X, W, backend=None):
    """``uvect(log(W X W))`` for a stack of SPD matrices ``X``."""
    shape = np.shape(X)
    X3, W = _prepare(X, W)
    d = X3.shape[-1]
    out = np.empty((X3.shape[0], d * (d + 1) // 2))
    if len(X3):
        get_backend(backend).whiten_logm_uvect(X3, W, out)
    return out.reshape(shape[:-2] + (d * (d + 1) // 2,))
