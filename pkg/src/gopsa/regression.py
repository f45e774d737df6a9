"""Ridge regression, prediction metrics and model comparison statistics."""

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .exceptions import DimensionMismatch, InvalidInput, UndefinedMetric


@dataclass
class RidgeModel:
    """Fitted ridge coefficients.

    ``intercept`` is zero when the model was fit without one.
    """

    coefficients: np.ndarray
    intercept: float
    lam: float

    def predict(self, Z):
        return ridge_predict(self, Z)


@dataclass
class MetricRecord:
    r2: float
    mae: float
    spearman: float
    split_id: int = 0
    combination_id: str = ""
    method: str = ""
    spearman_degenerate: bool = False


@dataclass
class TTestResult:
    statistic: float
    p_value: float
    mean_diff: float
    n_splits: int
    test_fraction: float
    degenerate: bool = False


def _finite_2d(Z, name="Z"):
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise InvalidInput(f"{name} has non-finite entries")
    return Z


def ridge_solve(Z, y, lam, solver="auto"):
    """Ridge coefficients without intercept.

    The dual form ``Z^T (lam I_N + Z Z^T)^-1 y`` and the primal form
    ``(Z^T Z + lam I_p)^-1 Z^T y`` agree; ``"auto"`` picks the one with the
    smaller system.
    """
    N, p = Z.shape
    if solver == "auto":
        solver = "dual" if N <= p else "primal"
    if solver == "dual":
        K = Z @ Z.T
        K[np.diag_indices_from(K)] += lam
        return Z.T @ linalg.solve(K, y, assume_a="pos")
    if solver == "primal":
        G = Z.T @ Z
        G[np.diag_indices_from(G)] += lam
        return linalg.solve(G, Z.T @ y, assume_a="pos")
    raise ValueError(f"unknown solver {solver!r}")


def ridge_fit(Z, y, lam, fit_intercept=True, solver="auto"):
    """Fit ridge regression.

    Parameters
    ----------
    Z : array-like, shape (n_samples, n_features)
    y : array-like, shape (n_samples,)
    lam : float
        Penalty, strictly positive.
    fit_intercept : bool
        Center ``Z`` and ``y`` before solving; the intercept is unpenalized.
    solver : {"auto", "dual", "primal"}

    Returns
    -------
    RidgeModel
    """
    Z = _finite_2d(Z)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != Z.shape[0] or y.shape[0] < 1:
        raise DimensionMismatch(f"{Z.shape[0]} rows but {y.shape[0]} targets")
    if not np.all(np.isfinite(y)):
        raise InvalidInput("y has non-finite entries")
    if not lam > 0:
        raise InvalidInput(f"lambda must be positive, got {lam}")
    if fit_intercept:
        z_mean = Z.mean(axis=0)
        y_mean = y.mean()
        beta = ridge_solve(Z - z_mean, y - y_mean, lam, solver)
        intercept = float(y_mean - z_mean @ beta)
    else:
        beta = ridge_solve(Z, y, lam, solver)
        intercept = 0.0
    return RidgeModel(beta, intercept, float(lam))


def ridge_predict(model, Z):
    Z = _finite_2d(Z)
    if Z.shape[1] != model.coefficients.shape[0]:
        raise DimensionMismatch(
            f"model has {model.coefficients.shape[0]} features, Z has {Z.shape[1]}")
    return Z @ model.coefficients + model.intercept


def _pair(y_true, y_pred, min_len):
    y_true = np.asarray(y_true, dtype=np.float64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise DimensionMismatch(f"lengths differ: {y_true.shape[0]} vs {y_pred.shape[0]}")
    if y_true.shape[0] < min_len:
        raise InvalidInput(f"need at least {min_len} samples")
    return y_true, y_pred


def r2_score(y_true, y_pred):
    """Coefficient of determination ``1 - SS_res / SS_tot``."""
    y_true, y_pred = _pair(y_true, y_pred, 2)
    ss_tot = np.sum((y_true - y_true.mean()) ** 2)
    if ss_tot == 0:
        raise UndefinedMetric("R2 is undefined for constant y_true")
    return float(1.0 - np.sum((y_true - y_pred) ** 2) / ss_tot)


def mae(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred, 1)
    return float(np.mean(np.abs(y_true - y_pred)))


def spearman_rho(y_true, y_pred):
    """Pearson correlation of average ranks.

    Raises
    ------
    UndefinedMetric
        If either input is constant.
    """
    y_true, y_pred = _pair(y_true, y_pred, 2)
    r1 = stats.rankdata(y_true)
    r2 = stats.rankdata(y_pred)
    r1 -= r1.mean()
    r2 -= r2.mean()
    denom = np.sqrt(np.sum(r1 ** 2) * np.sum(r2 ** 2))
    if denom == 0:
        raise UndefinedMetric("Spearman correlation is undefined for constant input")
    return float(np.clip(np.sum(r1 * r2) / denom, -1.0, 1.0))


def corrected_ttest(diffs, test_fraction):
    """Paired t-test with the Nadeau-Bengio variance correction.

    ``t = mean(d) / sqrt((1/J + n_test/n_train) * var(d))`` with
    ``n_test/n_train = test_fraction / (1 - test_fraction)``; the two-sided
    p-value uses a Student t with ``J - 1`` degrees of freedom.

    A zero variance gives ``p = 1`` when the mean difference is zero and
    ``p = 0`` otherwise; the latter is flagged ``degenerate``.
    """
    diffs = np.asarray(diffs, dtype=np.float64).reshape(-1)
    J = diffs.shape[0]
    if J < 2:
        raise InvalidInput("corrected t-test needs at least two splits")
    if not 0 < test_fraction < 1:
        raise InvalidInput(f"test_fraction must lie in (0, 1), got {test_fraction}")
    mean = float(diffs.mean())
    var = float(diffs.var(ddof=1))
    if var == 0:
        if mean == 0:
            return TTestResult(0.0, 1.0, mean, J, test_fraction, degenerate=False)
        return TTestResult(float(np.copysign(np.inf, mean)), 0.0, mean, J, test_fraction,
                           degenerate=True)
    ratio = test_fraction / (1 - test_fraction)
    t = mean / np.sqrt((1.0 / J + ratio) * var)
    p = 2.0 * stats.t.sf(abs(t), df=J - 1)
    return TTestResult(float(t), float(min(max(p, 0.0), 1.0)), mean, J, test_fraction)


def minmax_normalize(values):
    """Min-max scale a 1-D array to [0, 1].

    Returns ``(scaled, degenerate)``; a constant input maps to 0.5.
    """
    values = np.asarray(values, dtype=np.float64)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return np.full_like(values, np.nan), True
    lo, hi = finite.min(), finite.max()
    if hi == lo:
        return np.where(np.isfinite(values), 0.5, np.nan), True
    return (values - lo) / (hi - lo), False


METRICS = ("r2", "mae", "spearman")


def minmax_normalize_per_combination(records):
    """Min-max normalize each metric within each combination.

    For every (combination, metric) the minimum over all methods and splits
    maps to 0 and the maximum to 1. MAE keeps its raw orientation.

    Parameters
    ----------
    records : list of MetricRecord

    Returns
    -------
    normalized : list of MetricRecord
        Same order as ``records``.
    degenerate : set of (combination_id, metric)
        Groups whose values were all equal (mapped to 0.5).
    """
    records = list(records)
    out = [MetricRecord(r.r2, r.mae, r.spearman, r.split_id, r.combination_id, r.method,
                        r.spearman_degenerate) for r in records]
    degenerate = set()
    combos = sorted({r.combination_id for r in records})
    for combo in combos:
        idx = [i for i, r in enumerate(records) if r.combination_id == combo]
        for metric in METRICS:
            vals = np.array([getattr(records[i], metric) for i in idx])
            scaled, flag = minmax_normalize(vals)
            if flag:
                degenerate.add((combo, metric))
            for i, v in zip(idx, scaled):
                setattr(out[i], metric, float(v))
    return out, degenerate
