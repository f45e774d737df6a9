"""Tangent-space features: vectorization and the transport-then-log map."""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from . import backend
from .dataset import check_compatible
from .exceptions import ConvergenceFailure, DimensionMismatch, InvalidInput
from .manifold import MeanConfig, riemannian_mean
from .spd import _reconstruct, _spd_eig, as_spd, as_sym

#: tag recorded in serialized models; identifies the uvect coefficient order
UVECT_ORDER = "row-major-upper-sqrt2"


def _triu(d):
    rows, cols = np.triu_indices(d)
    weights = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, weights


def uvect(S):
    """Upper triangle of symmetric matrices, off-diagonal terms times sqrt(2).

    Ordering is row-major over the upper triangle: ``s11, √2 s12, ..., s22,
    ...``. The Euclidean norm of the output equals the Frobenius norm of the
    input.
    """
    S = as_sym(S)
    rows, cols, weights = _triu(S.shape[-1])
    return S[..., rows, cols] * weights


def unvect(v):
    """Inverse of :func:`uvect`."""
    v = np.asarray(v, dtype=np.float64)
    p = v.shape[-1]
    d = int(round((np.sqrt(8 * p + 1) - 1) / 2))
    if d * (d + 1) // 2 != p:
        raise DimensionMismatch(f"length {p} is not a triangular number")
    rows, cols, weights = _triu(d)
    S = np.zeros(v.shape[:-1] + (d, d))
    S[..., rows, cols] = v / weights
    S[..., cols, rows] = v / weights
    return S


def _power_from_eig(w, U, a):
    return _reconstruct(w ** a, U)


def phi(S, mean, alpha):
    """``uvect(log(mean^(-alpha/2) S mean^(-alpha/2)))``.

    Parameters
    ----------
    S : ndarray, shape (..., d, d)
        SPD matrices.
    mean : ndarray, shape (d, d)
        Reference point of the domain.
    alpha : float
        Transport fraction in [0, 1]; ``0`` gives ``uvect(log S)`` and ``1``
        the fully re-centered features.
    """
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInput(f"alpha must lie in [0, 1], got {alpha}")
    S = as_sym(S)
    w, U = _spd_eig(as_spd(mean))
    if S.shape[-2:] != U.shape:
        raise DimensionMismatch(f"dimension mismatch: {S.shape} vs {U.shape}")
    return backend.whiten_logm_uvect(S, _power_from_eig(w, U, -alpha / 2))


@dataclass
class DomainMeans:
    """Grid of per-domain, per-frequency Riemannian means.

    Attributes
    ----------
    domain_ids : list of str
    means : ndarray, shape (n_domains, n_freqs, d, d)
    """

    domain_ids: list
    means: np.ndarray

    def __post_init__(self):
        self.domain_ids = [str(k) for k in self.domain_ids]
        self.means = np.asarray(self.means, dtype=np.float64)
        if self.means.ndim != 4 or self.means.shape[0] != len(self.domain_ids):
            raise DimensionMismatch(
                f"means grid of shape {self.means.shape} for {len(self.domain_ids)} domains")
        self._eig = np.linalg.eigh(self.means)

    @property
    def n_domains(self):
        return self.means.shape[0]

    @property
    def n_freqs(self):
        return self.means.shape[1]

    @property
    def dim(self):
        return self.means.shape[-1]

    def index(self, domain_id):
        return self.domain_ids.index(str(domain_id))

    def whiteners(self, k, alpha):
        """``mean^(-alpha/2)`` for every frequency of domain row ``k``."""
        w, U = self._eig[0][k], self._eig[1][k]
        return _power_from_eig(w, U, -alpha / 2)

    def powers(self, k, a):
        w, U = self._eig[0][k], self._eig[1][k]
        return _power_from_eig(w, U, a)


@dataclass
class FeatureMatrix:
    """Stacked feature rows with the domain label of each row."""

    data: np.ndarray
    row_domain: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def shape(self):
        return self.data.shape


def compute_domain_means(domains, cfg=None):
    """Riemannian mean of every (domain, frequency) cell.

    Raises
    ------
    ConvergenceFailure
        Naming the domain and frequency index that failed.
    """
    cfg = cfg or MeanConfig()
    domains = list(domains)
    d, F = check_compatible(domains)
    grid = np.empty((len(domains), F, d, d))
    for k, dom in enumerate(domains):
        if dom.n_recordings == 0:
            raise InvalidInput(f"domain {dom.domain_id} is empty")
        for f in range(F):
            try:
                grid[k, f] = riemannian_mean(dom.covs[:, f], cfg)
            except ConvergenceFailure as exc:
                raise ConvergenceFailure(
                    f"domain {dom.domain_id}, frequency index {f}: {exc}",
                    last_iterate=exc.last_iterate, residual=exc.residual) from None
    return DomainMeans([dom.domain_id for dom in domains], grid)


def domain_features(covs, whiteners):
    """Feature rows for one domain given per-frequency whiteners.

    Parameters
    ----------
    covs : ndarray, shape (n, F, d, d)
    whiteners : ndarray, shape (F, d, d)

    Returns
    -------
    ndarray, shape (n, F * d * (d + 1) / 2)
        Per-bin features concatenated in ascending frequency order.
    """
    n, F, d, _ = covs.shape
    p = d * (d + 1) // 2
    out = np.empty((n, F * p))
    for f in range(F):
        out[:, f * p:(f + 1) * p] = backend.whiten_logm_uvect(covs[:, f], whiteners[f])
    return out


def build_feature_matrix(domains, means, gammas):
    """Feature matrix with one transport parameter per domain.

    Row order is domain order, then recording order within a domain. Domain
    ``k`` uses ``alpha_k = sigmoid(gammas[k])`` for all of its frequency bins.
    """
    domains = list(domains)
    gammas = np.asarray(gammas, dtype=np.float64).reshape(-1)
    if gammas.shape[0] != len(domains) or means.n_domains != len(domains):
        raise DimensionMismatch(
            f"{len(domains)} domains, {gammas.shape[0]} gammas, {means.n_domains} mean rows")
    d, F = check_compatible(domains)
    if (means.dim, means.n_freqs) != (d, F):
        raise DimensionMismatch("means grid does not match the domains' (d, F)")
    alphas = expit(gammas)
    blocks = [domain_features(dom.covs, means.whiteners(k, alphas[k]))
              for k, dom in enumerate(domains)]
    labels = np.concatenate([[dom.domain_id] * dom.n_recordings for dom in domains])
    return FeatureMatrix(np.vstack(blocks), labels)
