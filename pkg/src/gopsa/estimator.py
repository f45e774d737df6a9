"""GOPSA: learned per-domain transport along the geodesic to the identity.

Train time jointly fits one transport parameter per source domain and a
shared ridge model. Test time fits a single transport parameter for an
unlabeled target domain so that the mean prediction matches the known mean
outcome of that domain.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import expit

from .dataset import RecordingSet, check_compatible
from .exceptions import ConvergenceFailure, DimensionMismatch, InvalidInput
from .features import DomainMeans, compute_domain_means, domain_features
from .regression import RidgeModel, ridge_fit

logger = logging.getLogger(__name__)

#: coarse scan used to seed the test-time search
TARGET_SCAN = tuple(float(g) for g in range(-6, 7, 2))
#: |gamma| beyond which sigmoid(gamma) equals 0 or 1 to ~1e-13
GAMMA_BOUND = 30.0


def sigmoid(gamma):
    """``1 / (1 + exp(-gamma))``, saturating without overflow."""
    return expit(gamma)


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings shared by the train-time and test-time optimizers."""

    max_iter: int = 200
    grad_tol: float = 1e-7
    fd_step: float = 1e-5
    init_gamma: float = 0.0
    #: relative loss decrease over ``stall_window`` iterations that stops training
    stall_tol: float = 1e-10
    stall_window: int = 5

    def __post_init__(self):
        if self.max_iter < 1:
            raise InvalidInput("max_iter must be >= 1")
        if not (self.grad_tol > 0 and self.fd_step > 0):
            raise InvalidInput("grad_tol and fd_step must be positive")


@dataclass
class GopsaModel:
    """Fitted source-side GOPSA model."""

    gammas: np.ndarray
    ridge: RidgeModel
    means: DomainMeans
    lam: float
    train_loss_trace: np.ndarray
    fit_intercept: bool = True
    converged: bool = True
    grad_norm: float = 0.0

    @property
    def alphas(self):
        return sigmoid(self.gammas)

    @property
    def domain_ids(self):
        return self.means.domain_ids

    def gamma_for(self, domain_id):
        return float(self.gammas[self.means.index(domain_id)])

    def predict_source(self, covs, domain_id):
        """Predict recordings of a training domain with its learned transport."""
        k = self.means.index(domain_id)
        covs = np.asarray(covs, dtype=np.float64)
        Z = domain_features(covs, self.means.whiteners(k, sigmoid(self.gammas[k])))
        return self.ridge.predict(Z)


@dataclass
class TargetAdaptation:
    """Outcome of the test-time search for one target domain."""

    gamma_target: float
    target_means: np.ndarray
    achieved_mean_error: float
    non_identifiable: bool = False
    scan: dict = field(default_factory=dict)

    @property
    def alpha(self):
        return float(sigmoid(self.gamma_target))


class _SourceProblem:
    """Caches everything the source loss needs across evaluations."""

    def __init__(self, domains, means, lam, fit_intercept):
        self.domains = domains
        self.means = means
        self.lam = lam
        self.fit_intercept = fit_intercept
        self.y = np.concatenate([dom.ages for dom in domains])
        self.n_evals = 0

    def features(self, gammas):
        alphas = sigmoid(np.asarray(gammas, dtype=np.float64))
        return np.vstack([domain_features(dom.covs, self.means.whiteners(k, alphas[k]))
                          for k, dom in enumerate(self.domains)])

    def fit(self, gammas):
        Z = self.features(gammas)
        model = ridge_fit(Z, self.y, self.lam, fit_intercept=self.fit_intercept)
        return Z, model

    def loss(self, gammas):
        self.n_evals += 1
        Z, model = self.fit(gammas)
        r = self.y - Z @ model.coefficients - model.intercept
        return float(r @ r)


def _check_labeled(domains):
    domains = list(domains)
    check_compatible(domains)
    for dom in domains:
        if not dom.labeled or dom.n_recordings < 1:
            raise InvalidInput(f"domain {dom.domain_id} needs at least one labeled recording")
    return domains


def source_loss(gammas, domains, means, lam, fit_intercept=True):
    """Squared training residual of the inner ridge at fixed transports.

    Parameters
    ----------
    gammas : array-like, shape (n_domains,)
        Unconstrained transport parameters; ``alpha = sigmoid(gamma)``.
    domains : list of RecordingSet
        Labeled source domains.
    means : DomainMeans
        Per-domain Riemannian means, rows aligned with ``domains``.
    lam : float
        Ridge penalty.
    """
    domains = _check_labeled(domains)
    gammas = np.asarray(gammas, dtype=np.float64).reshape(-1)
    if gammas.shape[0] != len(domains):
        raise DimensionMismatch(f"{gammas.shape[0]} gammas for {len(domains)} domains")
    return _SourceProblem(domains, means, lam, fit_intercept).loss(gammas)


def fd_gradient(fun, x, step):
    """Central finite-difference gradient (two evaluations per coordinate)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (fun(x + e) - fun(x - e)) / (2 * step)
    return g


class _Stall(Exception):
    pass


def train(domains, lam, cfg=None, fit_intercept=True, means=None, mean_cfg=None):
    """Fit per-domain transports and the shared ridge model.

    The source loss is minimized over the unconstrained parameters with
    L-BFGS using central finite-difference gradients. Every accepted iterate
    satisfies a sufficient-decrease line search, so the recorded loss trace
    never increases.

    Parameters
    ----------
    domains : list of RecordingSet
        Labeled source domains.
    lam : float
        Ridge penalty.
    cfg : OptimizerConfig, optional
    fit_intercept : bool
        Fit an unpenalized intercept (``False`` gives the strict
        no-intercept objective).
    means : DomainMeans, optional
        Precomputed domain means, rows aligned with ``domains``.
    mean_cfg : MeanConfig, optional

    Returns
    -------
    GopsaModel
        ``converged`` is ``False`` when ``max_iter`` was reached first.
    """
    cfg = cfg or OptimizerConfig()
    domains = _check_labeled(domains)
    if means is None:
        means = compute_domain_means(domains, mean_cfg)
    elif means.domain_ids != [dom.domain_id for dom in domains]:
        raise DimensionMismatch("means rows do not match the source domains")
    problem = _SourceProblem(domains, means, lam, fit_intercept)
    K = len(domains)

    def fun(g):
        value = problem.loss(g)
        if not np.isfinite(value):
            raise ConvergenceFailure(f"non-finite source loss at gammas={g}",
                                     last_iterate=np.array(g), residual=value)
        return value

    def jac(g):
        return fd_gradient(fun, g, cfg.fd_step)

    x0 = np.full(K, float(cfg.init_gamma))
    trace = [fun(x0)]
    best = [x0.copy()]

    def callback(intermediate_result):
        x, f = intermediate_result.x, intermediate_result.fun
        if f <= trace[-1]:
            best[0] = np.array(x, copy=True)
        trace.append(min(float(f), trace[-1]))
        w = cfg.stall_window
        if len(trace) > w:
            old = trace[-1 - w]
            if old - trace[-1] <= cfg.stall_tol * max(abs(old), 1.0):
                raise StopIteration

    g0 = jac(x0)
    if np.max(np.abs(g0)) <= cfg.grad_tol:
        x_star, g_star = x0, g0
    else:
        optimize.minimize(
            fun, x0, jac=jac, method="L-BFGS-B", callback=callback,
            bounds=[(-GAMMA_BOUND, GAMMA_BOUND)] * K,
            options={"maxiter": cfg.max_iter, "gtol": cfg.grad_tol, "ftol": 0.0},
        )
        x_star = best[0]
        g_star = jac(x_star)
    grad_norm = float(np.max(np.abs(g_star)))
    converged = grad_norm <= cfg.grad_tol or (
        len(trace) > cfg.stall_window
        and trace[-1 - cfg.stall_window] - trace[-1]
        <= cfg.stall_tol * max(abs(trace[-1 - cfg.stall_window]), 1.0))
    # gradients at the saturated bounds are not meaningful
    at_bound = np.abs(x_star) >= GAMMA_BOUND
    if np.any(at_bound) and np.max(np.abs(g_star[~at_bound]), initial=0.0) <= cfg.grad_tol:
        converged = True
    if not converged:
        logger.info("GOPSA training stopped at max_iter with |grad|_inf=%.3g", grad_norm)
    _, ridge = problem.fit(x_star)
    return GopsaModel(
        gammas=np.asarray(x_star, dtype=np.float64),
        ridge=ridge,
        means=means,
        lam=float(lam),
        train_loss_trace=np.asarray(trace),
        fit_intercept=fit_intercept,
        converged=bool(converged),
        grad_norm=grad_norm,
    )


class _TargetProblem:
    def __init__(self, target, target_means, model):
        F = model.means.n_freqs
        if target.n_freqs != F or target.dim != model.means.dim:
            raise DimensionMismatch("target (d, F) does not match the model")
        self.covs = target.covs
        self.target_means = np.asarray(target_means, dtype=np.float64)
        self.eig = np.linalg.eigh(self.target_means)
        self.model = model

    def features(self, gamma):
        alpha = sigmoid(gamma)
        w, U = self.eig
        W = (U * (w ** (-alpha / 2))[:, None, :]) @ np.swapaxes(U, -1, -2)
        return domain_features(self.covs, W)

    def predict(self, gamma):
        return self.model.ridge.predict(self.features(gamma))

    def mean_prediction(self, gamma):
        return float(np.mean(self.predict(gamma)))


def target_means_of(target, mean_cfg=None):
    """Per-frequency Riemannian means of a target domain, shape (F, d, d)."""
    return compute_domain_means([target], mean_cfg).means[0]


def target_loss(gamma, target, target_means, model, ybar):
    """``(ybar - mean prediction on the target at gamma)^2``."""
    if target.n_recordings < 1:
        raise InvalidInput("target domain is empty")
    m = _TargetProblem(target, target_means, model).mean_prediction(float(gamma))
    return (float(ybar) - m) ** 2


def _root_in_bracket(g, a, b, ga, gb, fd_step, tol, max_iter):
    """Safeguarded Newton for ``g(x) = 0`` with ``g(a) * g(b) < 0``."""
    x = a if abs(ga) < abs(gb) else b
    gx = ga if x == a else gb
    for _ in range(max_iter):
        if abs(gx) <= tol or abs(b - a) <= 1e-12 * max(1.0, abs(x)):
            break
        slope = (g(x + fd_step) - g(x - fd_step)) / (2 * fd_step)
        step_ok = slope != 0 and np.isfinite(slope)
        x_new = x - gx / slope if step_ok else 0.5 * (a + b)
        if not (min(a, b) < x_new < max(a, b)):
            x_new = 0.5 * (a + b)
        g_new = g(x_new)
        if np.sign(g_new) == np.sign(ga):
            a, ga = x_new, g_new
        else:
            b, gb = x_new, g_new
        x, gx = x_new, g_new
    return x


def adapt(target, ybar, model, cfg=None, target_means=None, mean_cfg=None):
    """Fit the target transport parameter.

    A coarse scan over ``gamma in {-6, -4, ..., 6}`` (plus ``init_gamma``)
    locates sign changes of ``mean prediction - ybar``; a bracketed
    derivative-based search then drives the gap to zero. When no sign change
    exists the loss is minimized locally around the best scanned point,
    extending to the saturated ends of the sigmoid.

    Returns
    -------
    TargetAdaptation
    """
    cfg = cfg or OptimizerConfig()
    if target.n_recordings < 1:
        raise InvalidInput("target domain is empty")
    if target_means is None:
        target_means = target_means_of(target, mean_cfg)
    problem = _TargetProblem(target, target_means, model)
    ybar = float(ybar)

    def gap(gamma):
        return problem.mean_prediction(gamma) - ybar

    grid = sorted(set(TARGET_SCAN) | {float(cfg.init_gamma)})
    gaps = np.array([gap(g) for g in grid])
    scan = dict(zip(grid, gaps ** 2))
    scale = 1.0 + abs(ybar) + np.max(np.abs(gaps))
    if np.ptp(gaps) <= 1e-12 * scale:
        g0 = float(cfg.init_gamma)
        return TargetAdaptation(g0, target_means, abs(gap(g0)), non_identifiable=True,
                                scan=scan)

    tol = 1e-12 * (1.0 + abs(ybar))
    roots = [i for i in range(len(grid) - 1) if gaps[i] == 0 or gaps[i] * gaps[i + 1] < 0]
    if roots:
        # among brackets, take the one closest to the initial guess
        i = min(roots, key=lambda j: abs(0.5 * (grid[j] + grid[j + 1]) - cfg.init_gamma))
        if gaps[i] == 0:
            gamma = grid[i]
        else:
            gamma = _root_in_bracket(gap, grid[i], grid[i + 1], gaps[i], gaps[i + 1],
                                     cfg.fd_step, tol, cfg.max_iter)
    else:
        i = int(np.argmin(np.abs(gaps)))
        lo = grid[i - 1] if i > 0 else -GAMMA_BOUND
        hi = grid[i + 1] if i < len(grid) - 1 else GAMMA_BOUND
        res = optimize.minimize_scalar(lambda g: gap(g) ** 2, bounds=(lo, hi),
                                       method="bounded",
                                       options={"xatol": 1e-10, "maxiter": cfg.max_iter})
        gamma = float(res.x) if res.fun <= gaps[i] ** 2 else grid[i]
    return TargetAdaptation(float(gamma), target_means, abs(gap(gamma)), scan=scan)


def adapt_and_predict(target, ybar, model, cfg=None, target_means=None, mean_cfg=None):
    """Adapt to an unlabeled target domain and predict its outcomes.

    Parameters
    ----------
    target : RecordingSet
        Target recordings; ages, if present, are ignored.
    ybar : float
        Known mean outcome of the target domain.
    model : GopsaModel

    Returns
    -------
    adaptation : TargetAdaptation
    predictions : ndarray, shape (n_recordings,)
    """
    adaptation = adapt(target, ybar, model, cfg, target_means, mean_cfg)
    problem = _TargetProblem(target, adaptation.target_means, model)
    preds = problem.predict(adaptation.gamma_target)
    adaptation.achieved_mean_error = abs(ybar - float(np.mean(preds)))
    return adaptation, preds


__all__ = [
    "GopsaModel", "OptimizerConfig", "RecordingSet", "TargetAdaptation", "adapt",
    "adapt_and_predict", "fd_gradient", "sigmoid", "source_loss", "target_loss", "train",
]
