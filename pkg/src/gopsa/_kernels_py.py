"""Pure numpy implementation of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

from .exceptions import NotPositiveDefinite

BACKEND = "python"


def _whitened_eig(X, W):
    C = W @ X @ W
    C = 0.5 * (C + np.swapaxes(C, -1, -2))
    w, U = np.linalg.eigh(C)
    bad = np.flatnonzero(w[:, 0] <= 0)
    if bad.size:
        raise NotPositiveDefinite(f"whitened matrix {bad[0]} is not positive definite")
    return w, U


def whiten_logm(X, W, out):
    """Write ``log(W X[n] W)`` into ``out[n]`` for every ``n``."""
    w, U = _whitened_eig(X, W)
    out[...] = (U * np.log(w)[:, None, :]) @ np.swapaxes(U, -1, -2)


def whiten_logm_uvect(X, W, out):
    """Write ``uvect(log(W X[n] W))`` into ``out[n]`` for every ``n``."""
    d = X.shape[-1]
    L = np.empty_like(X)
    whiten_logm(X, W, L)
    rows, cols = np.triu_indices(d)
    weights = np.where(rows == cols, 1.0, np.sqrt(2.0))
    out[...] = L[:, rows, cols] * weights
