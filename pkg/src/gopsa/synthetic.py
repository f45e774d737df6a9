"""Synthetic multi-domain SPD data with a joint shift in matrices and outcomes.

Each domain ``k`` has a base point ``M_k = exp(l_k D_f)`` and recordings

    Sigma = M_k^(1/2) exp(((y - ybar_k) / s) A_f + eps) M_k^(1/2)

where ``A_f`` is a fixed unit-norm symmetric direction per frequency,
``ybar_k`` is the domain's sample mean outcome and ``eps`` is symmetric
Gaussian noise. The shift direction ``D_f = cos(theta) A_f + sin(theta) B``
mixes the outcome direction with a unit-norm direction ``B`` orthogonal to
every ``A_f``.

The domain offset ``l_k = c (ybar_k - reference_age) / (s (1 - alpha*_k))``
is chosen so that transporting the domain's mean a fraction ``alpha*_k`` of
the way to the identity leaves a residual offset that is linear in the
domain's mean outcome. ``alpha*_k`` interpolates ``alpha_range`` linearly
over the midpoints of the configured age ranges, so the generating
transports are monotone in domain mean age. With ``c = 0`` the matrices carry
no information about a domain's mean outcome.
"""

from dataclasses import dataclass, field

import numpy as np

from .dataset import RecordingSet
from .exceptions import ConfigError
from .spd import matrix_exp


def default_age_ranges(K, lo=10.0, hi=80.0):
    """``K`` disjoint, equally wide age ranges covering ``[lo, hi]``."""
    edges = np.linspace(lo, hi, K + 1)
    return [(float(a), float(b)) for a, b in zip(edges[:-1], edges[1:])]


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    Parameters
    ----------
    d, F, K : int
        Matrix size, number of frequency bins, number of domains.
    n_per_domain : int or sequence of int
    seed : int
    age_ranges : sequence of (min, max), optional
        One per domain; defaults to :func:`default_age_ranges`.
    intercept_strength : float
        ``c``, dimensionless; zero gives identical domain base points.
    signal_strength : float
        ``s``; years per unit of tangent-space signal.
    noise_sigma : float
    alpha_range : (float, float)
        Generating transport at the youngest and oldest domain.
    reference_age : float
        Outcome value at which a domain's base point is the identity.
    shift_angle : float
        ``theta`` in degrees; 0 shifts along the outcome direction, 90
        orthogonally to it.
    domain_ids : sequence of str, optional
    freqs : sequence of float, optional
    """

    d: int = 5
    F: int = 3
    K: int = 4
    n_per_domain: object = 50
    seed: int = 0
    age_ranges: tuple | None = None
    intercept_strength: float = 1.0
    signal_strength: float = 40.0
    noise_sigma: float = 0.02
    alpha_range: tuple = (0.1, 0.6)
    reference_age: float = 0.0
    shift_angle: float = 45.0
    domain_ids: tuple | None = None
    freqs: tuple | None = field(default=None)

    def __post_init__(self):
        if min(self.d, self.F, self.K) < 1:
            raise ConfigError("d, F and K must be positive")
        counts = self.counts
        if len(counts) != self.K or min(counts) < 1:
            raise ConfigError("n_per_domain must give K positive counts")
        ranges = self.ranges
        if len(ranges) != self.K:
            raise ConfigError(f"{len(ranges)} age ranges for K={self.K}")
        for lo, hi in ranges:
            if not lo < hi:
                raise ConfigError(f"age range ({lo}, {hi}) needs min < max")
        if self.signal_strength <= 0 or self.noise_sigma < 0:
            raise ConfigError("signal_strength must be positive and noise_sigma >= 0")
        if not all(0 <= a < 1 for a in self.alpha_range):
            raise ConfigError("alpha_range values must lie in [0, 1)")
        if self.domain_ids is not None and len(set(self.domain_ids)) != self.K:
            raise ConfigError("domain_ids must be K distinct labels")
        if self.freqs is not None and len(self.freqs) != self.F:
            raise ConfigError(f"{len(self.freqs)} freqs for F={self.F}")

    @property
    def counts(self):
        if np.ndim(self.n_per_domain) == 0:
            return [int(self.n_per_domain)] * self.K
        return [int(n) for n in self.n_per_domain]

    @property
    def ranges(self):
        if self.age_ranges is None:
            return default_age_ranges(self.K)
        return [(float(lo), float(hi)) for lo, hi in self.age_ranges]

    @property
    def ids(self):
        if self.domain_ids is None:
            return [f"site{k:02d}" for k in range(self.K)]
        return [str(i) for i in self.domain_ids]

    def generating_alphas(self):
        """``alpha*_k``, linear in the age-range midpoints."""
        mids = np.array([0.5 * (lo + hi) for lo, hi in self.ranges])
        a0, a1 = self.alpha_range
        span = mids.max() - mids.min()
        if span == 0:
            return np.full(self.K, 0.5 * (a0 + a1))
        return a0 + (a1 - a0) * (mids - mids.min()) / span


def _sym_gaussian(rng, d, size=()):
    X = rng.standard_normal(size + (d, d))
    return (X + np.swapaxes(X, -1, -2)) / 2.0


def _directions(rng, d, F):
    """Unit-norm ``A_f`` and a unit-norm ``B`` orthogonal to all of them."""
    A = _sym_gaussian(rng, d, (F,))
    A /= np.linalg.norm(A, axis=(-2, -1))[:, None, None]
    B = _sym_gaussian(rng, d)
    # Gram-Schmidt in Frobenius space (A_f need not be mutually orthogonal)
    basis = []
    for Af in A:
        v = Af.copy()
        for q in basis:
            v -= np.sum(v * q) * q
        n = np.linalg.norm(v)
        if n > 1e-12:
            basis.append(v / n)
    for q in basis:
        B -= np.sum(B * q) * q
    nb = np.linalg.norm(B)
    if nb < 1e-12:
        raise ConfigError("d too small for an intercept direction orthogonal to the signal")
    return A, B / nb


def generate_synthetic(cfg):
    """Draw one :class:`RecordingSet` per domain.

    Every domain uses its own Philox stream spawned from ``cfg.seed``, so a
    domain's data does not depend on how many other domains are generated or
    in which order.
    """
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.K + 1)
    shared = np.random.Generator(np.random.Philox(children[0]))
    A, B = _directions(shared, cfg.d, cfg.F)
    alphas = cfg.generating_alphas()
    th = np.deg2rad(cfg.shift_angle)
    D = np.cos(th) * A + np.sin(th) * B[None]
    freqs = cfg.freqs if cfg.freqs is not None else np.arange(1, cfg.F + 1, dtype=float)
    out = []
    for k, (dom_id, n, (lo, hi)) in enumerate(zip(cfg.ids, cfg.counts, cfg.ranges)):
        rng = np.random.Generator(np.random.Philox(children[k + 1]))
        y = rng.uniform(lo, hi, size=n)
        noise = _sym_gaussian(rng, cfg.d, (n, cfg.F)) * cfg.noise_sigma
        ybar = float(np.mean(y))
        offset = (cfg.intercept_strength * (ybar - cfg.reference_age)
                  / (cfg.signal_strength * (1.0 - alphas[k])))
        half = matrix_exp(0.5 * offset * D)
        W = ((y - ybar) / cfg.signal_strength)[:, None, None, None] * A[None] + noise
        covs = half @ matrix_exp(W) @ half
        covs = 0.5 * (covs + np.swapaxes(covs, -1, -2))
        out.append(RecordingSet(dom_id, covs, y, None, freqs))
    return out
