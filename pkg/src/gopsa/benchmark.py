"""Evaluation protocol: source/target combinations, stratified shuffle
splits of the target sites, nested cross-validation of the ridge penalty and
per-method scoring.

Each method is fit once per combination on all source recordings. In every
split the selected evaluation recordings of each target site are used both
to adapt (target mean matrices and mean outcome) and to score; predictions
are pooled across target sites before computing metrics.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines as bl
from .dataset import check_compatible
from .estimator import OptimizerConfig, adapt_and_predict, target_means_of, train
from .exceptions import ConfigError, GopsaError, UndefinedMetric
from .features import DomainMeans, compute_domain_means
from .regression import (
    METRICS, MetricRecord, corrected_ttest, mae, minmax_normalize_per_combination, r2_score,
    spearman_rho,
)

logger = logging.getLogger(__name__)

METHODS = ("dummy", "noda", "recenter", "dointercept", "gopsa")
DEFAULT_LAMBDAS = tuple(float(v) for v in np.logspace(-1, 5, 7))
# exceptions treated as a failed cell rather than a crash
CELL_ERRORS = (GopsaError, ArithmeticError, ValueError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class BenchmarkConfig:
    """Protocol settings.

    Parameters
    ----------
    combinations : sequence of sequence of str
        Source-site lists, one per combination.
    target_sites : sequence of str, optional
        Defaults to every site not used as a source in that combination.
    n_splits : int
    test_fraction : float
        Share of each target site scored (and adapted on) per split.
    lambda_grid : sequence of float
    inner_cv_folds : int
    methods : sequence of str
        Subset of ``METHODS``; repeated names are evaluated again under a
        suffixed label.
    seed : int
    fit_intercept : bool
        Intercept setting of the GOPSA ridge.
    n_jobs : int
        Worker threads for split evaluation; results do not depend on it.
    optimizer : OptimizerConfig
    """

    combinations: tuple = ()
    target_sites: tuple | None = None
    n_splits: int = 100
    test_fraction: float = 0.5
    lambda_grid: tuple = DEFAULT_LAMBDAS
    inner_cv_folds: int = 3
    methods: tuple = METHODS
    seed: int = 0
    fit_intercept: bool = True
    n_jobs: int = 1
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        object.__setattr__(self, "combinations",
                           tuple(tuple(str(s) for s in c) for c in self.combinations))
        object.__setattr__(self, "methods", tuple(str(m) for m in self.methods))
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        if self.target_sites is not None:
            object.__setattr__(self, "target_sites", tuple(str(s) for s in self.target_sites))
        if self.n_splits < 1:
            raise ConfigError("n_splits must be >= 1")
        if not 0 < self.test_fraction <= 1:
            raise ConfigError("test_fraction must lie in (0, 1]")
        if not self.lambda_grid or min(self.lambda_grid) <= 0:
            raise ConfigError("lambda_grid must be non-empty and positive")
        if self.inner_cv_folds < 2:
            raise ConfigError("inner_cv_folds must be >= 2")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
        for combo in self.combinations:
            if not combo:
                raise ConfigError("empty source combination")
            if self.target_sites is not None and set(combo) & set(self.target_sites):
                raise ConfigError(f"sites {sorted(set(combo) & set(self.target_sites))} "
                                  "are both source and target")


@dataclass
class CellFailure:
    combination_id: str
    split_id: int
    method: str
    error: str


@dataclass
class BenchmarkReport:
    """Everything produced by :func:`run_benchmark`.

    Attributes
    ----------
    records : list of MetricRecord
        Raw per-split metrics.
    normalized : list of MetricRecord
        Min-max normalized within each combination.
    degenerate : set of (combination_id, metric)
    ttests : dict
        ``(combination_id, "gopsa-dointercept", metric) -> TTestResult`` on
        raw per-split differences.
    failures : list of CellFailure
    lambdas : dict
        ``(combination_id, method) -> selected penalty``.
    alphas : list of dict
        Fitted GOPSA transports per site.
    psd : list of dict
        Mean log-diagonal of site means before and after transport.
    """

    records: list = field(default_factory=list)
    normalized: list = field(default_factory=list)
    degenerate: set = field(default_factory=set)
    ttests: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    lambdas: dict = field(default_factory=dict)
    alphas: list = field(default_factory=list)
    psd: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.failures


def combination_id(sources):
    return ",".join(sources)


def _rng(seed, *key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _eval_count(n, fraction):
    return min(n, max(1, int(math.floor(fraction * n + 0.5))))


def stratified_shuffle_split(targets, n_splits, test_fraction, seed):
    """Per-split evaluation indices, drawn without replacement within each site.

    Parameters
    ----------
    targets : list of RecordingSet
    n_splits : int
    test_fraction : float
    seed : int or tuple
        ``SeedSequence`` entropy; split ``j`` uses its own spawned stream.

    Returns
    -------
    list of dict
        ``split[j][domain_id]`` is a sorted index array into that site.
    """
    for dom in targets:
        if dom.n_recordings < 2:
            raise ConfigError(f"target site {dom.domain_id} has {dom.n_recordings} "
                              "recording(s); at least 2 are needed")
    splits = []
    for j in range(n_splits):
        rng = _rng(seed, j)
        split = {}
        for dom in targets:
            m = _eval_count(dom.n_recordings, test_fraction)
            split[dom.domain_id] = np.sort(rng.permutation(dom.n_recordings)[:m])
        splits.append(split)
    return splits


def stratified_folds(domains, folds, rng):
    """Fold label per recording, balanced within each site."""
    labels = []
    for dom in domains:
        lab = np.empty(dom.n_recordings, dtype=int)
        lab[rng.permutation(dom.n_recordings)] = np.arange(dom.n_recordings) % folds
        labels.append(lab)
    return labels


class _Fitter:
    """Fits methods on a fixed set of source domains, caching the means."""

    def __init__(self, sources, fit_intercept, optimizer):
        self.sources = sources
        self.fit_intercept = fit_intercept
        self.optimizer = optimizer
        self._site_means = None
        self._pooled = None

    @property
    def site_means(self):
        if self._site_means is None:
            self._site_means = compute_domain_means(self.sources)
        return self._site_means

    @property
    def pooled(self):
        if self._pooled is None:
            self._pooled = bl.pooled_means(self.sources)
        return self._pooled

    def fit(self, method, lam):
        if method == "dummy":
            return bl.do_dummy_fit()
        if method == "noda":
            return bl.no_da_fit(self.sources, lam, means=self.pooled)
        if method == "recenter":
            return bl.recenter_fit(self.sources, lam, means=self.site_means)
        if method == "dointercept":
            return bl.do_intercept_fit(self.sources, lam, means=self.pooled)
        if method == "gopsa":
            return train(self.sources, lam, self.optimizer, fit_intercept=self.fit_intercept,
                         means=self.site_means)
        raise ConfigError(f"unknown method {method!r}")


def _predict_source(method, model, dom):
    """Predict held-out recordings of a site seen in training."""
    if method == "noda":
        return bl.no_da_predict(model, dom)
    if method == "recenter":
        return bl.recenter_source_predict(model, dom.covs, dom.domain_id)
    if method == "dointercept":
        return bl.do_intercept_source_predict(model, dom.covs, dom.domain_id)
    if method == "gopsa":
        return model.predict_source(dom.covs, dom.domain_id)
    raise ConfigError(f"method {method!r} has no source predictor")


def nested_cv_lambda(sources, method, lambda_grid, folds, seed, fit_intercept=True,
                     optimizer=None):
    """Select the ridge penalty by site-stratified K-fold CV on the sources.

    The score is the mean over folds of R2 on the pooled held-out
    recordings. Ties go to the larger penalty.

    Returns
    -------
    float or None
        ``None`` for the dummy method, which has no penalty.
    """
    grid = sorted(float(v) for v in lambda_grid)
    if not grid:
        raise ConfigError("lambda_grid is empty")
    if method == "dummy":
        return None
    if len(grid) == 1:
        return grid[0]
    optimizer = optimizer or OptimizerConfig()
    labels = stratified_folds(sources, folds, _rng(seed, 1))
    scores = np.zeros(len(grid))
    for fold in range(folds):
        train_doms = [dom.subset(np.flatnonzero(lab != fold))
                      for dom, lab in zip(sources, labels)]
        held = [dom.subset(np.flatnonzero(lab == fold)) for dom, lab in zip(sources, labels)]
        held = [h for h in held if h.n_recordings]
        fitter = _Fitter(train_doms, fit_intercept, optimizer)
        y = np.concatenate([h.ages for h in held])
        for i, lam in enumerate(grid):
            model = fitter.fit(method, lam)
            pred = np.concatenate([_predict_source(method, model, h) for h in held])
            try:
                scores[i] += r2_score(y, pred) / folds
            except UndefinedMetric:
                scores[i] += -np.inf
    best = 0
    for i in range(1, len(grid)):
        if scores[i] >= scores[best]:
            best = i
    logger.debug("%s: CV scores %s -> lambda=%g", method, scores, grid[best])
    return grid[best]


def _metrics(y, pred, split_id, combo, method):
    try:
        r2 = r2_score(y, pred)
    except UndefinedMetric:
        r2 = float("nan")
    try:
        rho, degenerate = spearman_rho(y, pred), False
    except UndefinedMetric:
        # constant predictions: reported as 0 and flagged
        rho, degenerate = 0.0, True
    return MetricRecord(r2, mae(y, pred), rho, split_id, combo, method, degenerate)


def _method_labels(methods):
    seen = {}
    labels = []
    for m in methods:
        seen[m] = seen.get(m, 0) + 1
        labels.append(m if seen[m] == 1 else f"{m}_{seen[m]}")
    return labels


def _predict_target(method, model, sub, ybar, means):
    if method == "dummy":
        return bl.do_dummy_predict(ybar, sub.n_recordings), None
    if method == "noda":
        return bl.no_da_predict(model, sub), None
    if method == "recenter":
        return bl.recenter_predict(model, sub, DomainMeans([sub.domain_id], means[None])), None
    if method == "dointercept":
        return bl.do_intercept_predict(model, sub, ybar), None
    if method == "gopsa":
        adaptation, pred = adapt_and_predict(sub.unlabeled(), ybar, model, target_means=means)
        return pred, adaptation.alpha
    raise ConfigError(f"unknown method {method!r}")


def _evaluate_split(j, split, targets, entries, combo):
    """Score every method on one split; returns (records, failures)."""
    subs = [dom.subset(split[dom.domain_id]) for dom in targets]
    means = {}
    records, failures = [], []
    for label, method, model in entries:
        if model is None:
            continue
        try:
            preds, ys = [], []
            for sub in subs:
                ybar = sub.mean_age
                m = None
                if method in ("recenter", "gopsa"):
                    if sub.domain_id not in means:
                        means[sub.domain_id] = target_means_of(sub)
                    m = means[sub.domain_id]
                pred, _ = _predict_target(method, model, sub, ybar, m)
                preds.append(pred)
                ys.append(sub.ages)
            records.append(_metrics(np.concatenate(ys), np.concatenate(preds), j, combo, label))
        except CELL_ERRORS as exc:
            failures.append(CellFailure(combo, j, label, f"{type(exc).__name__}: {exc}"))
    return records, failures


def _mean_log_diag(M):
    return np.mean(np.log(np.diagonal(M, axis1=-2, axis2=-1)), axis=-1)


def _site_psd(combo, site, role, freqs, mean, alpha):
    rows = []
    w, U = np.linalg.eigh(mean)
    for method, a in (("none", 0.0), ("recenter", 1.0), ("gopsa", alpha)):
        if a is None:
            continue
        # mean^(1 - a): the site mean transported a fraction a toward identity
        moved = (U * (w ** (1.0 - a))[..., None, :]) @ np.swapaxes(U, -1, -2)
        if a == 1.0:
            moved = np.broadcast_to(np.eye(mean.shape[-1]), mean.shape)
        for f, v in zip(freqs, _mean_log_diag(moved)):
            rows.append({"combination_id": combo, "site": site, "role": role,
                         "method": method, "freq": float(f), "log_power": float(v)})
    return rows


def inspect_sites(combo, sources, targets, gopsa_model):
    """Per-site fitted transports and transported mean spectra."""
    alphas, psd = [], []
    freqs = sources[0].freqs if sources[0].freqs is not None else np.arange(sources[0].n_freqs)
    for k, dom in enumerate(sources):
        a = float(gopsa_model.alphas[k]) if gopsa_model is not None else None
        if a is not None:
            alphas.append({"combination_id": combo, "site": dom.domain_id, "role": "source",
                           "alpha": a, "mean_age": dom.mean_age})
        try:
            mean = (gopsa_model.means.means[k] if gopsa_model is not None
                    else target_means_of(dom))
        except CELL_ERRORS as exc:
            logger.warning("source %s: site mean failed (%s)", dom.domain_id, exc)
            continue
        psd += _site_psd(combo, dom.domain_id, "source", freqs, mean, a)
    for dom in targets:
        try:
            means = target_means_of(dom)
        except CELL_ERRORS as exc:
            logger.warning("target %s: site mean failed (%s)", dom.domain_id, exc)
            continue
        a = None
        if gopsa_model is not None and dom.labeled:
            try:
                adaptation, _ = adapt_and_predict(dom.unlabeled(), dom.mean_age, gopsa_model,
                                                  target_means=means)
                a = adaptation.alpha
                alphas.append({"combination_id": combo, "site": dom.domain_id,
                               "role": "target", "alpha": a, "mean_age": dom.mean_age})
            except CELL_ERRORS as exc:
                logger.warning("target %s: adaptation failed (%s)", dom.domain_id, exc)
        psd += _site_psd(combo, dom.domain_id, "target", freqs, means, a)
    return alphas, psd


def run_benchmark(cfg, domains):
    """Run the full protocol.

    Parameters
    ----------
    cfg : BenchmarkConfig
    domains : list of RecordingSet
        All labeled sites; sources and targets are looked up by id.

    Returns
    -------
    BenchmarkReport
    """
    check_compatible(domains)
    by_id = {dom.domain_id: dom for dom in domains}
    report = BenchmarkReport()
    labels = _method_labels(cfg.methods)
    for ci, combo_sites in enumerate(cfg.combinations):
        missing = [s for s in combo_sites if s not in by_id]
        if missing:
            raise ConfigError(f"unknown source sites {missing}")
        combo = combination_id(combo_sites)
        sources = [by_id[s] for s in combo_sites]
        target_ids = cfg.target_sites or tuple(s for s in sorted(by_id) if s not in combo_sites)
        missing = [s for s in target_ids if s not in by_id]
        if missing:
            raise ConfigError(f"unknown target sites {missing}")
        targets = [by_id[s] for s in target_ids]
        if not targets:
            raise ConfigError(f"combination {combo} leaves no target site")
        for dom in sources + targets:
            if not dom.labeled:
                raise ConfigError(f"site {dom.domain_id} has no outcomes to score against")
        splits = stratified_shuffle_split(targets, cfg.n_splits, cfg.test_fraction,
                                          (cfg.seed, ci))

        fitter = _Fitter(sources, cfg.fit_intercept, cfg.optimizer)
        entries = []
        gopsa_model = None
        for label, method in zip(labels, cfg.methods):
            try:
                lam = nested_cv_lambda(sources, method, cfg.lambda_grid, cfg.inner_cv_folds,
                                       (cfg.seed, ci), cfg.fit_intercept, cfg.optimizer)
                report.lambdas[(combo, label)] = lam
                model = fitter.fit(method, lam)
                if method == "gopsa" and gopsa_model is None:
                    gopsa_model = model
            except CELL_ERRORS as exc:
                model = None
                msg = f"{type(exc).__name__}: {exc}"
                report.failures += [CellFailure(combo, j, label, msg)
                                    for j in range(cfg.n_splits)]
            entries.append((label, method, model))

        jobs = list(enumerate(splits))
        work = lambda js: _evaluate_split(js[0], js[1], targets, entries, combo)  # noqa: E731
        if cfg.n_jobs > 1:
            with ThreadPoolExecutor(cfg.n_jobs) as pool:
                results = list(pool.map(work, jobs))
        else:
            results = [work(js) for js in jobs]
        for recs, fails in results:
            report.records += recs
            report.failures += fails

        alphas, psd = inspect_sites(combo, sources, targets, gopsa_model)
        report.alphas += alphas
        report.psd += psd

    report.normalized, report.degenerate = minmax_normalize_per_combination(report.records)
    report.ttests = compare_methods(report.records, "gopsa", "dointercept", cfg.test_fraction)
    return report


def compare_methods(records, first, second, test_fraction):
    """Corrected t-tests of ``first - second`` per combination and metric.

    Only splits where both methods produced a finite value are paired.
    """
    out = {}
    if not 0 < test_fraction < 1:
        return out
    table = {(r.combination_id, r.method, r.split_id): r for r in records}
    combos = sorted({r.combination_id for r in records})
    for combo in combos:
        split_ids = sorted({r.split_id for r in records if r.combination_id == combo})
        for metric in METRICS:
            diffs = []
            for j in split_ids:
                a, b = table.get((combo, first, j)), table.get((combo, second, j))
                if a is None or b is None:
                    continue
                va, vb = getattr(a, metric), getattr(b, metric)
                if np.isfinite(va) and np.isfinite(vb):
                    diffs.append(va - vb)
            if len(diffs) >= 2:
                out[(combo, f"{first}-{second}", metric)] = corrected_ttest(diffs, test_fraction)
    return out


TTEST_COLUMNS = ["combination_id", "comparison", "metric", "mean_diff", "statistic",
                 "p_value", "n_splits", "test_fraction", "degenerate"]
ALPHA_COLUMNS = ["combination_id", "site", "role", "alpha", "mean_age"]
PSD_COLUMNS = ["combination_id", "site", "role", "method", "freq", "log_power"]


def emit_tables(report, out_dir):
    """Write results.csv, summary.json, normalized.csv, ttests.csv, alphas.csv,
    psd.csv and failures.csv into ``out_dir``."""
    from pathlib import Path

    from .dataio import RESULT_COLUMNS, _record_rows, save_results, write_csv

    out = Path(out_dir)
    save_results(report.records, out)
    write_csv(out / "normalized.csv", RESULT_COLUMNS, _record_rows(report.normalized))
    rows = []
    for (combo, comparison, metric), t in sorted(report.ttests.items(),
                                                 key=lambda kv: (kv[0][0], kv[0][1],
                                                                 METRICS.index(kv[0][2]))):
        rows.append([combo, comparison, metric, t.mean_diff, t.statistic, t.p_value,
                     t.n_splits, t.test_fraction, t.degenerate])
    write_csv(out / "ttests.csv", TTEST_COLUMNS, rows)
    write_csv(out / "alphas.csv", ALPHA_COLUMNS,
              [[r[c] for c in ALPHA_COLUMNS] for r in report.alphas])
    write_csv(out / "psd.csv", PSD_COLUMNS, [[r[c] for c in PSD_COLUMNS] for r in report.psd])
    write_csv(out / "failures.csv", ["combination_id", "split_id", "method", "error"],
              [[f.combination_id, f.split_id, f.method, f.error] for f in report.failures])
    return out
