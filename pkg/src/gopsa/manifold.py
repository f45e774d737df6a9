"""Affine-invariant Riemannian geometry on the SPD manifold.

Tangent vectors are plain symmetric ndarrays; the base point is passed
alongside wherever it matters.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh

from . import backend
from .exceptions import ConvergenceFailure, DimensionMismatch, InvalidInput
from .spd import _reconstruct, _spd_eig, as_spd, as_sym, matrix_exp

#: float noise tolerated outside [0, 1] before clamping
T_CLAMP = 1e-12


@dataclass(frozen=True)
class MeanConfig:
    """Settings of the Karcher mean fixed-point iteration.

    ``tol`` applies to the Frobenius norm of the mean tangent update.
    """

    max_iter: int = 100
    tol: float = 1e-10
    step: float = 1.0

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be >= 1")
        if not self.tol > 0:
            raise InvalidInput("tol must be positive")
        if not 0 < self.step <= 1:
            raise InvalidInput("step must lie in (0, 1]")


def _same_dims(A, B):
    if A.shape[-2:] != B.shape[-2:]:
        raise DimensionMismatch(f"dimension mismatch: {A.shape} vs {B.shape}")


def _sqrt_invsqrt(S):
    w, U = _spd_eig(S)
    r = np.sqrt(w)
    return _reconstruct(r, U), _reconstruct(1.0 / r, U)


def _sorted_mean(X):
    # summing entries in sorted order makes the result independent of input order
    return np.sort(X, axis=0).mean(axis=0)


def airm_inner(G1, G2, base):
    """Affine-invariant inner product ``tr(base^-1 G1 base^-1 G2)``."""
    base = as_spd(base)
    G1, G2 = as_sym(G1), as_sym(G2)
    _same_dims(G1, base)
    _same_dims(G2, base)
    A = np.linalg.solve(base, G1)
    B = np.linalg.solve(base, G2)
    return float(np.einsum("ij,ji->", A, B))


def airm_distance(A, B):
    """Riemannian distance ``||log(A^-1/2 B A^-1/2)||_F``.

    Computed from the generalized eigenvalues of the pencil ``(B, A)``.
    """
    A, B = as_spd(A), as_spd(B)
    _same_dims(A, B)
    w = eigvalsh(B, A)
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def log_map(base, S):
    """Riemannian logarithm of ``S`` at ``base``.

    Returns the symmetric matrix
    ``base^1/2 log(base^-1/2 S base^-1/2) base^1/2`` of the tangent space at
    ``base``.
    """
    base, S = as_spd(base), as_spd(S)
    _same_dims(base, S)
    half, ihalf = _sqrt_invsqrt(base)
    L = backend.whiten_logm(S, ihalf)
    return half @ L @ half


def exp_map(base, T):
    """Riemannian exponential, the inverse of :func:`log_map`."""
    base, T = as_spd(base), as_sym(T)
    half, ihalf = _sqrt_invsqrt(base)
    return half @ matrix_exp(ihalf @ T @ ihalf) @ half


def geodesic(A, B, t):
    """Point at fraction ``t`` of the geodesic from ``A`` to ``B``.

    ``A^1/2 (A^-1/2 B A^-1/2)^t A^1/2``; values of ``t`` within ``1e-12`` of
    ``[0, 1]`` are clamped.
    """
    t = float(t)
    if not -T_CLAMP <= t <= 1 + T_CLAMP:
        raise InvalidInput(f"t must lie in [0, 1], got {t}")
    t = min(max(t, 0.0), 1.0)
    A, B = as_spd(A), as_spd(B)
    _same_dims(A, B)
    if t == 0.0:
        return A.copy()
    if t == 1.0:
        return B.copy()
    half, ihalf = _sqrt_invsqrt(A)
    w, U = _spd_eig(ihalf @ B @ ihalf)
    return half @ _reconstruct(w ** t, U) @ half


def parallel_transport_to_identity(Sprime, Sigma, alpha):
    """Transport ``Sprime`` from ``Sigma`` toward the identity.

    The destination is the point at fraction ``alpha`` of the geodesic from
    ``Sigma`` to ``I``, and the transport reduces to the congruence
    ``Sigma^(-alpha/2) Sprime Sigma^(-alpha/2)``.

    Parameters
    ----------
    Sprime : ndarray, shape (..., d, d)
        SPD matrices to transport.
    Sigma : ndarray, shape (d, d)
        Reference point, usually the Riemannian mean of ``Sprime``.
    alpha : float
        Fraction in [0, 1]. ``0`` leaves the matrices unchanged and ``1``
        whitens them by ``Sigma``.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInput(f"alpha must lie in [0, 1], got {alpha}")
    Sprime, Sigma = as_spd(Sprime), as_spd(Sigma)
    _same_dims(Sprime, Sigma)
    if alpha == 0.0:
        return Sprime.copy()
    w, U = _spd_eig(Sigma)
    E = _reconstruct(w ** (-alpha / 2), U)
    out = E @ Sprime @ E
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def riemannian_mean(covs, cfg=None):
    """Karcher mean under the affine-invariant metric.

    Fixed-point iteration ``M <- M^1/2 exp(step * T) M^1/2`` with
    ``T = mean_i log(M^-1/2 C_i M^-1/2)``, started from the arithmetic mean.
    The step is halved whenever the residual ``||T||_F`` fails to decrease.

    Parameters
    ----------
    covs : ndarray, shape (n_matrices, d, d)
        SPD matrices.
    cfg : MeanConfig, optional

    Returns
    -------
    M : ndarray, shape (d, d)

    Raises
    ------
    ConvergenceFailure
        If ``||T||_F > 10 * cfg.tol`` after ``cfg.max_iter`` iterations. The
        exception carries the last iterate and its residual.
    """
    cfg = cfg or MeanConfig()
    covs = np.asarray(covs, dtype=np.float64)
    if covs.ndim != 3 or covs.shape[0] == 0:
        raise InvalidInput("riemannian_mean needs a non-empty stack of matrices")
    covs = np.ascontiguousarray(as_sym(covs))

    M = _sorted_mean(covs)
    step = cfg.step
    half, ihalf = _sqrt_invsqrt(M)
    T = _sorted_mean(backend.whiten_logm(covs, ihalf))
    res = np.linalg.norm(T)
    for _ in range(cfg.max_iter):
        if res <= cfg.tol:
            return M
        w, U = np.linalg.eigh(step * T)
        cand = half @ _reconstruct(np.exp(w), U) @ half
        cand = 0.5 * (cand + cand.T)
        c_half, c_ihalf = _sqrt_invsqrt(cand)
        c_T = _sorted_mean(backend.whiten_logm(covs, c_ihalf))
        c_res = np.linalg.norm(c_T)
        if c_res < res:
            M, half, ihalf, T, res = cand, c_half, c_ihalf, c_T, c_res
        else:
            step *= 0.5
    # a stalled iteration within a decade of the tolerance is accepted
    if res <= 10 * cfg.tol:
        return M
    raise ConvergenceFailure(
        f"Riemannian mean did not converge in {cfg.max_iter} iterations "
        f"(residual {res:.3g})", last_iterate=M, residual=float(res))
