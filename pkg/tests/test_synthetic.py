import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gopsa.exceptions import ConfigError
from gopsa.features import build_feature_matrix, compute_domain_means
from gopsa.manifold import airm_distance
from gopsa.regression import r2_score, ridge_fit
from gopsa.synthetic import SynthConfig, default_age_ranges, generate_synthetic


class TestConfig:
    def test_defaults(self):
        cfg = SynthConfig()
        assert cfg.counts == [50] * 4
        assert cfg.ranges == default_age_ranges(4)
        assert cfg.ids == ["site00", "site01", "site02", "site03"]

    def test_default_ranges_cover_interval(self):
        r = default_age_ranges(5)
        assert r[0][0] == 10.0 and r[-1][1] == 80.0
        assert all(a[1] == b[0] for a, b in zip(r, r[1:]))

    def test_generating_alphas_monotone(self):
        alphas = SynthConfig(K=5, alpha_range=(0.2, 0.7)).generating_alphas()
        assert alphas[0] == pytest.approx(0.2) and alphas[-1] == pytest.approx(0.7)
        assert np.all(np.diff(alphas) > 0)

    @pytest.mark.parametrize("kwargs", [
        {"d": 0}, {"n_per_domain": [3, 3]}, {"age_ranges": ((1, 0),) * 4},
        {"alpha_range": (0.1, 1.0)}, {"noise_sigma": -1.0}, {"domain_ids": ("a",) * 4},
        {"freqs": (1.0,)},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SynthConfig(**kwargs)

    def test_d1_has_no_orthogonal_direction(self):
        with pytest.raises(ConfigError):
            generate_synthetic(SynthConfig(d=1, F=1, K=1, n_per_domain=2))


class TestGenerator:
    def test_shapes(self):
        cfg = SynthConfig(d=3, F=2, K=3, n_per_domain=[4, 5, 6], freqs=(4.0, 8.0))
        doms = generate_synthetic(cfg)
        assert [d.covs.shape for d in doms] == [(4, 2, 3, 3), (5, 2, 3, 3), (6, 2, 3, 3)]
        np.testing.assert_array_equal(doms[0].freqs, [4.0, 8.0])
        for dom, (lo, hi) in zip(doms, cfg.ranges):
            assert np.all((dom.ages >= lo) & (dom.ages <= hi))
            dom.validate_spd()

    def test_same_seed_bit_identical(self):
        cfg = SynthConfig(d=3, F=2, K=2, n_per_domain=5, seed=11)
        a, b = generate_synthetic(cfg), generate_synthetic(cfg)
        for x, y in zip(a, b):
            assert x.covs.tobytes() == y.covs.tobytes()
            assert x.ages.tobytes() == y.ages.tobytes()

    def test_seed_changes_data(self):
        a = generate_synthetic(SynthConfig(d=3, F=1, K=1, n_per_domain=5, seed=1))
        b = generate_synthetic(SynthConfig(d=3, F=1, K=1, n_per_domain=5, seed=2))
        assert not np.array_equal(a[0].covs, b[0].covs)

    @settings(max_examples=10)
    @given(st.floats(0, 1))
    def test_noiseless_linear_at_every_alpha(self, alpha):
        cfg = SynthConfig(d=3, F=2, K=1, n_per_domain=30, noise_sigma=0.0,
                          intercept_strength=0.0)
        dom = generate_synthetic(cfg)[0]
        means = compute_domain_means([dom])
        gamma = np.log(alpha / (1 - alpha)) if 0 < alpha < 1 else (40.0 if alpha else -40.0)
        Z = build_feature_matrix([dom], means, [gamma]).data
        model = ridge_fit(Z, dom.ages, 1e-8)
        assert r2_score(dom.ages, model.predict(Z)) >= 0.999

    def test_means_separate_with_age_gap(self):
        cfg = SynthConfig(d=4, F=1, K=3, n_per_domain=40, seed=5,
                          age_ranges=((10, 20), (30, 40), (70, 80)))
        doms = generate_synthetic(cfg)
        M = compute_domain_means(doms).means[:, 0]
        ybar = [d.mean_age for d in doms]
        for j in range(3):
            others = [k for k in range(3) if k != j]
            others.sort(key=lambda k: abs(ybar[k] - ybar[j]))
            dists = [airm_distance(M[j], M[k]) for k in others]
            assert dists[0] < dists[1]

    def test_zero_strength_shares_base_point(self):
        cfg = SynthConfig(d=3, F=1, K=2, n_per_domain=200, seed=2, intercept_strength=0.0,
                          noise_sigma=0.0, age_ranges=((10, 20), (70, 80)))
        M = compute_domain_means(generate_synthetic(cfg)).means[:, 0]
        assert airm_distance(M[0], M[1]) < 1e-8
