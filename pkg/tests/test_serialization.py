import json

import numpy as np
import pytest

from gopsa.baselines import (
    do_dummy_fit, do_intercept_fit, do_intercept_predict, no_da_fit, no_da_predict, recenter_fit,
)
from gopsa.estimator import adapt_and_predict, train
from gopsa.exceptions import ConfigError, MissingFile
from gopsa.serialization import load_model, model_from_dict, model_to_dict, save_model
from gopsa.synthetic import SynthConfig, generate_synthetic


@pytest.fixture(scope="module")
def synth():
    return generate_synthetic(SynthConfig(d=3, F=2, K=3, n_per_domain=15, seed=9))


class TestGopsaModel:
    def test_round_trip_bit_exact(self, synth, tmp_path):
        model = train(synth[:2], 1.0)
        back = load_model(save_model(model, tmp_path / "m.json"))
        assert back.gammas.tobytes() == model.gammas.tobytes()
        assert back.ridge.coefficients.tobytes() == model.ridge.coefficients.tobytes()
        assert back.ridge.intercept == model.ridge.intercept
        assert back.means.means.tobytes() == model.means.means.tobytes()
        assert back.train_loss_trace.tobytes() == model.train_loss_trace.tobytes()
        assert (back.converged, back.fit_intercept, back.lam) == (
            model.converged, model.fit_intercept, model.lam)
        target = synth[2].unlabeled()
        _, p1 = adapt_and_predict(target, 60.0, model)
        _, p2 = adapt_and_predict(target, 60.0, back)
        np.testing.assert_array_equal(p1, p2)

    def test_document_fields(self, synth):
        doc = model_to_dict(train(synth[:2], 1.0))
        assert doc["kind"] == "gopsa"
        assert (doc["d"], doc["F"], doc["K"]) == (3, 2, 2)
        assert doc["uvect_order"] == "row-major-upper-sqrt2"


class TestBaselineModels:
    def test_dummy(self):
        back = model_from_dict(json.loads(json.dumps(model_to_dict(do_dummy_fit()))))
        assert back.kind.value == "dummy" and back.ridge is None

    def test_dointercept(self, synth, tmp_path):
        model = do_intercept_fit(synth[:2], 1.0)
        back = load_model(save_model(model, tmp_path / "m.json"))
        assert back.source_mean_ages == model.source_mean_ages
        np.testing.assert_array_equal(do_intercept_predict(back, synth[2], 50.0),
                                      do_intercept_predict(model, synth[2], 50.0))

    @pytest.mark.parametrize("fit", [no_da_fit, recenter_fit])
    def test_ridge_baselines(self, synth, fit):
        model = fit(synth[:2], 10.0)
        back = model_from_dict(json.loads(json.dumps(model_to_dict(model))))
        assert back.kind is model.kind
        assert back.ridge.coefficients.tobytes() == model.ridge.coefficients.tobytes()
        if fit is no_da_fit:
            np.testing.assert_array_equal(no_da_predict(back, synth[2]),
                                          no_da_predict(model, synth[2]))


class TestValidation:
    def test_wrong_format(self):
        with pytest.raises(ConfigError):
            model_from_dict({"format": "other"})

    def test_wrong_version(self):
        doc = model_to_dict(do_dummy_fit())
        doc["schema_version"] = 99
        with pytest.raises(ConfigError):
            model_from_dict(doc)

    def test_wrong_order(self):
        doc = model_to_dict(do_dummy_fit())
        doc["uvect_order"] = "column-major"
        with pytest.raises(ConfigError, match="ordering"):
            model_from_dict(doc)

    def test_unknown_kind(self):
        doc = model_to_dict(do_dummy_fit())
        doc["kind"] = "mystery"
        with pytest.raises(ConfigError):
            model_from_dict(doc)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MissingFile):
            load_model(tmp_path / "none.json")

    def test_unsupported_object(self):
        with pytest.raises(TypeError):
            model_to_dict(object())
