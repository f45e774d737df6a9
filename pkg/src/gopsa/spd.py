"""Dense symmetric / SPD matrix algebra.

All functions accept a single ``(d, d)`` matrix or a stack ``(..., d, d)``
and return float64 arrays. Matrix functions are computed through the
eigendecomposition ``M = U diag(w) U^T``.
"""

from typing import NamedTuple

import numpy as np

from .exceptions import InvalidInput, NotPositiveDefinite, NumericalOverflow

#: relative asymmetry above which a matrix is rejected instead of symmetrized
SYM_TOL = 1e-8
#: relative eigenvalue floor used by :func:`as_spd`
EPS_PD = 1e-12

_LOG_MAX = np.log(np.finfo(np.float64).max)


class EigenPair(NamedTuple):
    """Eigenvalues sorted ascending and orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _as_square(M):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise InvalidInput(f"expected square matrices, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInput("matrix has non-finite entries")
    return M


def as_sym(M, tol=SYM_TOL):
    """Validate and symmetrize.

    Last-bit asymmetry (file round trips) is removed with ``(M + M^T) / 2``;
    relative asymmetry above ``tol`` raises :class:`InvalidInput`.
    """
    M = _as_square(M)
    Mt = np.swapaxes(M, -1, -2)
    asym = np.linalg.norm(M - Mt, axis=(-2, -1))
    scale = np.maximum(np.linalg.norm(M, axis=(-2, -1)), np.finfo(float).tiny)
    if np.any(asym > tol * scale):
        raise InvalidInput(
            f"matrix is not symmetric (relative asymmetry {np.max(asym / scale):.3g})")
    return 0.5 * (M + Mt)


def as_spd(M, eps_pd=EPS_PD, tol=SYM_TOL):
    """Validate that ``M`` is SPD and return its symmetrized copy.

    The smallest eigenvalue must exceed ``eps_pd`` times the largest one.
    """
    M = as_sym(M, tol=tol)
    w = np.linalg.eigvalsh(M)
    wmin, wmax = w[..., 0], w[..., -1]
    if np.any(wmax <= 0) or np.any(wmin <= eps_pd * wmax):
        raise NotPositiveDefinite(
            f"matrix is not positive definite (min eigenvalue {np.min(wmin):.3g})")
    return M


def sym_eig(M):
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    M : ndarray, shape (..., d, d)
        Symmetric matrices with finite entries.

    Returns
    -------
    EigenPair
        ``eigenvalues`` of shape (..., d), ascending, and ``eigenvectors`` of
        shape (..., d, d) with orthonormal columns.
    """
    M = as_sym(M)
    w, U = np.linalg.eigh(M)
    return EigenPair(w, U)


def _reconstruct(w, U):
    out = (U * w[..., None, :]) @ np.swapaxes(U, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def _spd_eig(S):
    S = _as_square(S)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    w, U = np.linalg.eigh(S)
    if np.any(w <= 0):
        raise NotPositiveDefinite(
            f"matrix is not positive definite (min eigenvalue {np.min(w):.3g})")
    return w, U


def matrix_log(S):
    """Matrix logarithm of SPD matrices: ``U diag(log w) U^T``."""
    w, U = _spd_eig(S)
    return _reconstruct(np.log(w), U)


def matrix_exp(S):
    """Matrix exponential of symmetric matrices.

    Raises
    ------
    NumericalOverflow
        If an eigenvalue exceeds ``log(float64 max)``.
    """
    w, U = np.linalg.eigh(as_sym(S))
    if np.any(w > _LOG_MAX):
        raise NumericalOverflow(f"eigenvalue {np.max(w):.3g} overflows exp")
    return _reconstruct(np.exp(w), U)


def matrix_power(S, a):
    """Real power of SPD matrices, ``U diag(w ** a) U^T``."""
    a = float(a)
    if not np.isfinite(a):
        raise InvalidInput("exponent must be finite")
    w, U = _spd_eig(S)
    if a == 0.0:
        return np.broadcast_to(np.eye(U.shape[-1]), U.shape).copy()
    return _reconstruct(w ** a, U)


def matrix_sqrt(S):
    return matrix_power(S, 0.5)


def matrix_invsqrt(S):
    return matrix_power(S, -0.5)


def shrink(S, rho):
    """Trace-scaled Tikhonov shrinkage ``S + rho * tr(S) / d * I``.

    Falls back to ``S + rho * I`` where the trace is zero, so rank deficient
    inputs (e.g. after common average referencing) become SPD.

    Parameters
    ----------
    S : ndarray, shape (..., d, d)
        Symmetric positive semi-definite matrices.
    rho : float
        Shrinkage coefficient, strictly positive.
    """
    if not rho > 0:
        raise InvalidInput(f"shrinkage coefficient must be positive, got {rho}")
    S = as_sym(S)
    d = S.shape[-1]
    tr = np.trace(S, axis1=-2, axis2=-1)
    scale = np.where(tr > 0, rho * tr / d, rho)
    return S + scale[..., None, None] * np.eye(d)
