"""Comparison methods: domain-aware dummy, no adaptation, re-centering and
domain-aware intercept.

All of them use the same features and ridge plumbing as GOPSA.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dataset import RecordingSet, check_compatible
from .exceptions import InvalidInput
from .features import DomainMeans, compute_domain_means, domain_features
from .manifold import riemannian_mean
from .regression import RidgeModel, ridge_fit


class BaselineKind(str, Enum):
    DO_DUMMY = "dummy"
    NO_DA = "noda"
    RECENTER = "recenter"
    DO_INTERCEPT = "dointercept"


@dataclass
class BaselineModel:
    """A fitted baseline.

    Attributes
    ----------
    kind : BaselineKind
    ridge : RidgeModel or None
        Absent for the dummy model.
    means : DomainMeans or None
        One pooled row for NoDA / DoIntercept, one row per source domain for
        Recenter.
    source_mean_ages : dict or None
        Per-domain mean outcome, DoIntercept only.
    """

    kind: BaselineKind
    ridge: RidgeModel | None = None
    means: DomainMeans | None = None
    source_mean_ages: dict | None = None

    def __post_init__(self):
        self.kind = BaselineKind(self.kind)
        needs_ridge = self.kind is not BaselineKind.DO_DUMMY
        if needs_ridge != (self.ridge is not None) or needs_ridge != (self.means is not None):
            raise InvalidInput(f"{self.kind.value} model has inconsistent fields")
        if (self.kind is BaselineKind.DO_INTERCEPT) != (self.source_mean_ages is not None):
            raise InvalidInput("source_mean_ages is required for, and only for, dointercept")


def _labeled(domains):
    domains = list(domains)
    check_compatible(domains)
    for dom in domains:
        if not dom.labeled or dom.n_recordings < 1:
            raise InvalidInput(f"domain {dom.domain_id} needs labeled recordings")
    return domains


def pooled_means(domains, mean_cfg=None):
    """Per-frequency Riemannian mean over all recordings of all domains."""
    domains = list(domains)
    covs = np.concatenate([dom.covs for dom in domains])
    F = covs.shape[1]
    grid = np.stack([riemannian_mean(covs[:, f], mean_cfg) for f in range(F)])
    return DomainMeans(["pooled"], grid[None])


def _features_at(covs, means, k=0):
    return domain_features(covs, means.whiteners(k, 1.0))


def do_dummy_fit():
    return BaselineModel(BaselineKind.DO_DUMMY)


def do_dummy_predict(ybar_target, n):
    """Constant prediction of the known target mean."""
    if n < 1:
        raise InvalidInput("n must be >= 1")
    return np.full(int(n), float(ybar_target))


def no_da_fit(domains, lam, mean_cfg=None, means=None):
    """Ridge with intercept on features at the pooled source mean."""
    domains = _labeled(domains)
    if means is None:
        means = pooled_means(domains, mean_cfg)
    Z = np.vstack([_features_at(dom.covs, means) for dom in domains])
    y = np.concatenate([dom.ages for dom in domains])
    return BaselineModel(BaselineKind.NO_DA, ridge_fit(Z, y, lam, fit_intercept=True), means)


def no_da_predict(model, target):
    """Target features are taken at the pooled *source* mean."""
    return model.ridge.predict(_features_at(target.covs, model.means))


def recenter_fit(domains, lam, mean_cfg=None, means=None):
    """Ridge with intercept on features whitened by each domain's own mean."""
    domains = _labeled(domains)
    if means is None:
        means = compute_domain_means(domains, mean_cfg)
    Z = np.vstack([_features_at(dom.covs, means, k) for k, dom in enumerate(domains)])
    y = np.concatenate([dom.ages for dom in domains])
    return BaselineModel(BaselineKind.RECENTER, ridge_fit(Z, y, lam, fit_intercept=True), means)


def recenter_predict(model, target, target_means=None, mean_cfg=None):
    """The target is whitened by its own per-frequency mean."""
    if target_means is None:
        target_means = compute_domain_means([target], mean_cfg)
    elif not isinstance(target_means, DomainMeans):
        target_means = DomainMeans([target.domain_id], np.asarray(target_means)[None])
    return model.ridge.predict(_features_at(target.covs, target_means))


def recenter_source_predict(model, covs, domain_id):
    k = model.means.index(domain_id)
    return model.ridge.predict(_features_at(np.asarray(covs), model.means, k))


def do_intercept_fit(domains, lam, mean_cfg=None, means=None):
    """Ridge on per-domain centered outcomes, pooled-mean features.

    No global intercept is fit: each domain's mean outcome plays that role.
    """
    domains = _labeled(domains)
    if means is None:
        means = pooled_means(domains, mean_cfg)
    Z = np.vstack([_features_at(dom.covs, means) for dom in domains])
    y = np.concatenate([dom.ages - dom.mean_age for dom in domains])
    ridge = ridge_fit(Z, y, lam, fit_intercept=False)
    return BaselineModel(BaselineKind.DO_INTERCEPT, ridge, means,
                         {dom.domain_id: dom.mean_age for dom in domains})


def do_intercept_predict(model, target, ybar_target):
    """Refit the intercept on the target so the mean prediction is ``ybar``."""
    scores = _features_at(target.covs, model.means) @ model.ridge.coefficients
    return scores + (float(ybar_target) - np.mean(scores))


def do_intercept_source_predict(model, covs, domain_id):
    scores = _features_at(np.asarray(covs), model.means) @ model.ridge.coefficients
    return scores + model.source_mean_ages[str(domain_id)]


__all__ = [
    "BaselineKind", "BaselineModel", "RecordingSet", "do_dummy_predict", "do_intercept_fit",
    "do_intercept_predict", "no_da_fit", "no_da_predict", "pooled_means", "recenter_fit",
    "recenter_predict",
]
