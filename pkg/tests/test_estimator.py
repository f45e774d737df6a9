import numpy as np
import pytest

from gopsa.dataset import RecordingSet
from gopsa.estimator import (
    GopsaModel, OptimizerConfig, adapt, adapt_and_predict, fd_gradient, sigmoid, source_loss,
    target_loss, target_means_of, train,
)
from gopsa.exceptions import DimensionMismatch, InvalidInput
from gopsa.features import DomainMeans, compute_domain_means
from gopsa.regression import RidgeModel
from gopsa.synthetic import SynthConfig, generate_synthetic

from conftest import random_spd


@pytest.fixture(scope="module")
def synth():
    cfg = SynthConfig(d=3, F=2, K=3, n_per_domain=25, seed=7)
    return generate_synthetic(cfg)


@pytest.fixture(scope="module")
def fitted(synth):
    return train(synth, 1.0)


def identity_mean_domain(rng, name, n_pairs=5, F=1, d=3):
    """Recordings in inverse pairs, so every frequency has mean exactly I."""
    covs = []
    for _ in range(n_pairs):
        S = [random_spd(rng, d) for _ in range(F)]
        covs.append(S)
        covs.append([np.linalg.inv(s) for s in S])
    covs = np.array(covs)
    return RecordingSet(name, covs, rng.uniform(20, 60, len(covs)))


def identity_means(names, F=1, d=3):
    return DomainMeans(names, np.broadcast_to(np.eye(d), (len(names), F, d, d)).copy())


class TestSigmoid:
    def test_values(self):
        assert sigmoid(0.0) == 0.5
        assert sigmoid(800.0) == 1.0
        assert sigmoid(-800.0) == 0.0

    def test_config_checks(self):
        with pytest.raises(InvalidInput):
            OptimizerConfig(max_iter=0)
        with pytest.raises(InvalidInput):
            OptimizerConfig(fd_step=0.0)


class TestSourceLoss:
    def test_identity_means_flat(self, rng):
        doms = [identity_mean_domain(rng, k) for k in ("a", "b")]
        means = identity_means(["a", "b"])
        vals = [source_loss(g, doms, means, 1.0) for g in ([0, 0], [-4, 3], [5, 5])]
        np.testing.assert_allclose(vals, vals[0], rtol=1e-10)

    def test_single_recording_interpolates(self, rng):
        dom = RecordingSet("a", random_spd(rng, 3)[None, None], [42.0])
        means = compute_domain_means([dom])
        for g in (-3.0, 0.0, 3.0):
            assert source_loss([g], [dom], means, 1e-8) < 1e-10

    def test_nonnegative(self, synth):
        means = compute_domain_means(synth)
        assert source_loss(np.zeros(3), synth, means, 1.0) >= 0.0

    def test_gamma_count(self, synth):
        with pytest.raises(DimensionMismatch):
            source_loss([0.0], synth, compute_domain_means(synth), 1.0)

    def test_unlabeled_rejected(self, synth):
        means = compute_domain_means(synth)
        with pytest.raises(InvalidInput):
            source_loss(np.zeros(3), [d.unlabeled() for d in synth], means, 1.0)


class TestGradient:
    @pytest.mark.parametrize("point", [[0.0, 0.0, 0.0], [1.0, -2.0, 0.5], [-3.0, 2.0, 4.0]])
    def test_step_halving_self_consistency(self, synth, point):
        means = compute_domain_means(synth)

        def f(g):
            return source_loss(g, synth, means, 1.0)

        g1 = fd_gradient(f, np.array(point), 1e-4)
        g2 = fd_gradient(f, np.array(point), 5e-5)
        assert np.linalg.norm(g1 - g2) <= 0.01 * np.linalg.norm(g2)

    def test_quadratic(self):
        g = fd_gradient(lambda x: float(x @ x), np.array([1.0, -2.0]), 1e-3)
        np.testing.assert_allclose(g, [2.0, -4.0], rtol=1e-9)


class TestTrain:
    def test_identity_means_stay_at_init(self, rng):
        doms = [identity_mean_domain(rng, k) for k in ("a", "b")]
        cfg = OptimizerConfig(init_gamma=0.7)
        model = train(doms, 1.0, cfg, means=identity_means(["a", "b"]))
        np.testing.assert_allclose(model.gammas, 0.7)

    def test_improves_on_init(self, synth, fitted):
        trace = fitted.train_loss_trace
        assert trace[-1] <= trace[0]
        assert np.all(np.diff(trace) <= 0)
        assert np.all(np.isfinite(trace))
        means = compute_domain_means(synth)
        assert source_loss(fitted.gammas, synth, means, 1.0) <= trace[0]

    def test_domain_permutation_equivariance(self, synth, fitted):
        perm = [2, 0, 1]
        model = train([synth[i] for i in perm], 1.0)
        # saturated coordinates sit on a flat ridge, so compare alphas rather than gammas
        np.testing.assert_allclose(model.alphas, fitted.alphas[perm], atol=1e-4)
        assert model.train_loss_trace[-1] == pytest.approx(fitted.train_loss_trace[-1],
                                                           rel=1e-6)

    def test_model_accessors(self, synth, fitted):
        assert fitted.domain_ids == [d.domain_id for d in synth]
        assert fitted.gamma_for(synth[1].domain_id) == fitted.gammas[1]
        np.testing.assert_allclose(fitted.alphas, sigmoid(fitted.gammas))
        pred = fitted.predict_source(synth[0].covs, synth[0].domain_id)
        assert pred.shape == (synth[0].n_recordings,)

    def test_means_must_match(self, synth):
        means = compute_domain_means(synth[:2])
        with pytest.raises(DimensionMismatch):
            train(synth, 1.0, means=means)

    def test_max_iter_reported(self, synth):
        model = train(synth, 1.0, OptimizerConfig(max_iter=1, grad_tol=1e-14))
        assert not model.converged
        assert model.grad_norm > 0


def flat_model(means, intercept, p):
    return GopsaModel(np.zeros(means.n_domains), RidgeModel(np.zeros(p), intercept, 1.0),
                      means, 1.0, np.zeros(1))


class TestTargetLoss:
    def test_zero_beta_matching_intercept(self, synth):
        means = compute_domain_means(synth)
        model = flat_model(means, 33.0, 2 * 6)
        target = synth[0].unlabeled()
        tm = target_means_of(target)
        for g in (-5.0, 0.0, 5.0):
            assert target_loss(g, target, tm, model, 33.0) == 0.0

    def test_identity_target_means_flat(self, rng, fitted):
        target = identity_mean_domain(rng, "t", F=2)
        tm = np.broadcast_to(np.eye(3), (2, 3, 3)).copy()
        vals = [target_loss(g, target, tm, fitted, 40.0) for g in (-4.0, 0.0, 4.0)]
        np.testing.assert_allclose(vals, vals[0], rtol=1e-10)


class TestAdapt:
    def test_non_identifiable_flag(self, rng, fitted):
        target = identity_mean_domain(rng, "t", F=2)
        tm = np.broadcast_to(np.eye(3), (2, 3, 3)).copy()
        res = adapt(target, 40.0, fitted, target_means=tm)
        assert res.non_identifiable
        assert res.gamma_target == 0.0

    def test_zero_beta_model(self, synth):
        means = compute_domain_means(synth)
        model = flat_model(means, 30.0, 12)
        res, pred = adapt_and_predict(synth[1].unlabeled(), 45.0, model)
        np.testing.assert_array_equal(pred, 30.0)
        assert res.achieved_mean_error == pytest.approx(15.0)
        assert res.non_identifiable

    def test_no_worse_than_source_gamma(self, synth, fitted):
        k = 1
        dom = synth[k]
        res, _ = adapt_and_predict(dom.unlabeled(), dom.mean_age, fitted)
        ref = np.sqrt(target_loss(fitted.gammas[k], dom, target_means_of(dom), fitted,
                                  dom.mean_age))
        assert res.achieved_mean_error <= ref + 1e-12

    def test_target_in_learned_family(self, fitted):
        cfg = SynthConfig(d=3, F=2, K=5, n_per_domain=25, seed=7,
                          age_ranges=((10, 22), (30, 42), (50, 62), (20, 32), (40, 52)))
        doms = generate_synthetic(cfg)
        model = train(doms[:3], 1.0)
        for target in doms[3:]:
            res, pred = adapt_and_predict(target.unlabeled(), target.mean_age, model)
            assert res.achieved_mean_error <= 1e-3
            assert abs(np.mean(pred) - target.mean_age) <= 1e-3
            assert 0.0 < res.alpha < 1.0

    def test_empty_target(self, fitted):
        empty = RecordingSet("t", np.empty((0, 2, 3, 3)))
        with pytest.raises(InvalidInput):
            adapt(empty, 40.0, fitted, target_means=np.broadcast_to(np.eye(3), (2, 3, 3)))

    def test_dimension_checked(self, rng, fitted):
        target = RecordingSet("t", np.stack([[random_spd(rng, 2)] for _ in range(3)]))
        with pytest.raises(DimensionMismatch):
            adapt(target, 40.0, fitted)
