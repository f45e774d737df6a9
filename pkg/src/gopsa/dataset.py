"""In-memory container for one domain's recordings."""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInput, ShapeMismatch
from .spd import as_spd


@dataclass
class RecordingSet:
    """Per-subject, per-frequency SPD matrices of one domain (site).

    Parameters
    ----------
    domain_id : str
        Site label.
    covs : ndarray, shape (n_recordings, n_freqs, d, d)
        SPD matrices; frequency bins in ascending order.
    ages : ndarray, shape (n_recordings,), optional
        Outcomes. ``None`` for unlabeled target domains.
    subject_ids : list of str, optional
        Defaults to ``"<domain_id>-0000"``, ...
    freqs : ndarray, shape (n_freqs,), optional
        Bin centers in Hz, strictly increasing when given.
    """

    domain_id: str
    covs: np.ndarray
    ages: np.ndarray | None = None
    subject_ids: list = field(default=None)
    freqs: np.ndarray | None = None

    def __post_init__(self):
        self.domain_id = str(self.domain_id)
        covs = np.asarray(self.covs, dtype=np.float64)
        if covs.ndim == 3:
            covs = covs[:, None]
        if covs.ndim != 4 or covs.shape[-1] != covs.shape[-2]:
            raise ShapeMismatch(
                f"domain {self.domain_id}: covs must have shape (n, F, d, d), got {covs.shape}")
        if not np.all(np.isfinite(covs)):
            raise InvalidInput(f"domain {self.domain_id}: non-finite matrix entries")
        self.covs = covs
        n = covs.shape[0]
        if self.ages is not None:
            ages = np.asarray(self.ages, dtype=np.float64).reshape(-1)
            if ages.shape[0] != n:
                raise ShapeMismatch(
                    f"domain {self.domain_id}: {ages.shape[0]} ages for {n} recordings")
            if not np.all(np.isfinite(ages)):
                raise InvalidInput(f"domain {self.domain_id}: non-finite ages")
            self.ages = ages
        if self.subject_ids is None:
            self.subject_ids = [f"{self.domain_id}-{i:04d}" for i in range(n)]
        else:
            self.subject_ids = [str(s) for s in self.subject_ids]
            if len(self.subject_ids) != n:
                raise ShapeMismatch(
                    f"domain {self.domain_id}: {len(self.subject_ids)} subject ids "
                    f"for {n} recordings")
        if self.freqs is not None:
            freqs = np.asarray(self.freqs, dtype=np.float64).reshape(-1)
            if freqs.shape[0] != covs.shape[1]:
                raise ShapeMismatch(
                    f"domain {self.domain_id}: {freqs.shape[0]} freqs for {covs.shape[1]} bins")
            if np.any(np.diff(freqs) <= 0):
                raise InvalidInput(f"domain {self.domain_id}: freqs must be strictly increasing")
            self.freqs = freqs

    @property
    def n_recordings(self):
        return self.covs.shape[0]

    @property
    def n_freqs(self):
        return self.covs.shape[1]

    @property
    def dim(self):
        return self.covs.shape[-1]

    @property
    def labeled(self):
        return self.ages is not None

    @property
    def mean_age(self):
        return None if self.ages is None else float(np.mean(self.ages))

    def __len__(self):
        return self.n_recordings

    def subset(self, idx):
        """New RecordingSet restricted to the recordings at ``idx``."""
        idx = np.asarray(idx, dtype=int)
        return RecordingSet(
            self.domain_id,
            self.covs[idx],
            None if self.ages is None else self.ages[idx],
            [self.subject_ids[i] for i in idx],
            self.freqs,
        )

    def unlabeled(self):
        """Copy without outcomes."""
        return RecordingSet(self.domain_id, self.covs, None, list(self.subject_ids), self.freqs)

    def validate_spd(self):
        """Raise :class:`NotPositiveDefinite` naming the first bad matrix."""
        for i in range(self.n_recordings):
            for f in range(self.n_freqs):
                try:
                    as_spd(self.covs[i, f])
                except InvalidInput as exc:
                    raise type(exc)(
                        f"domain {self.domain_id}, subject {self.subject_ids[i]}, "
                        f"frequency index {f}: {exc}") from None


def check_compatible(domains):
    """Ensure all domains share (d, F); return them."""
    domains = list(domains)
    if not domains:
        raise InvalidInput("at least one domain is required")
    d, F = domains[0].dim, domains[0].n_freqs
    for dom in domains[1:]:
        if (dom.dim, dom.n_freqs) != (d, F):
            raise ShapeMismatch(
                f"domain {dom.domain_id} has (d, F) = {(dom.dim, dom.n_freqs)}, "
                f"expected {(d, F)}")
    return d, F
