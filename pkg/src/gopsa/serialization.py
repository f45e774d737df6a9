"""Versioned JSON documents for fitted models.

Floats are written with their shortest round-trip representation, so a
save/load cycle reproduces every float64 payload bit for bit. Matrices are
stored row-major as nested lists.
"""

import json
from pathlib import Path

import numpy as np

from .baselines import BaselineKind, BaselineModel
from .estimator import GopsaModel
from .exceptions import ConfigError, MissingFile
from .features import UVECT_ORDER, DomainMeans
from .regression import RidgeModel

SCHEMA_VERSION = 1
FORMAT_NAME = "gopsa-model"


def _ridge_doc(ridge):
    return {
        "lambda": float(ridge.lam),
        "coefficients": [float(b) for b in ridge.coefficients],
        "intercept": float(ridge.intercept),
    }


def _ridge_from(doc):
    return RidgeModel(np.array(doc["coefficients"], dtype=np.float64),
                      float(doc["intercept"]), float(doc["lambda"]))


def _means_doc(means):
    return {"domain_ids": list(means.domain_ids), "matrices": means.means.tolist()}


def _means_from(doc):
    return DomainMeans(doc["domain_ids"], np.array(doc["matrices"], dtype=np.float64))


def model_to_dict(model):
    """Plain-data document for a :class:`GopsaModel` or :class:`BaselineModel`."""
    doc = {"format": FORMAT_NAME, "schema_version": SCHEMA_VERSION,
           "uvect_order": UVECT_ORDER}
    if isinstance(model, GopsaModel):
        doc.update({
            "kind": "gopsa",
            "d": model.means.dim,
            "F": model.means.n_freqs,
            "K": model.means.n_domains,
            "lambda": float(model.lam),
            "fit_intercept": bool(model.fit_intercept),
            "gammas": [float(g) for g in model.gammas],
            "ridge": _ridge_doc(model.ridge),
            "means": _means_doc(model.means),
            "train_loss_trace": [float(v) for v in model.train_loss_trace],
            "converged": bool(model.converged),
            "grad_norm": float(model.grad_norm),
        })
        return doc
    if isinstance(model, BaselineModel):
        doc["kind"] = model.kind.value
        if model.ridge is not None:
            doc.update({
                "d": model.means.dim,
                "F": model.means.n_freqs,
                "K": model.means.n_domains,
                "lambda": float(model.ridge.lam),
                "ridge": _ridge_doc(model.ridge),
                "means": _means_doc(model.means),
            })
        if model.source_mean_ages is not None:
            doc["source_mean_ages"] = {k: float(v) for k, v in model.source_mean_ages.items()}
        return doc
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(doc):
    if doc.get("format") != FORMAT_NAME:
        raise ConfigError(f"not a model document (format={doc.get('format')!r})")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {doc.get('schema_version')}")
    if doc.get("uvect_order") != UVECT_ORDER:
        raise ConfigError(f"feature ordering {doc.get('uvect_order')!r} is not "
                          f"{UVECT_ORDER!r}")
    kind = doc.get("kind")
    if kind == "gopsa":
        return GopsaModel(
            gammas=np.array(doc["gammas"], dtype=np.float64),
            ridge=_ridge_from(doc["ridge"]),
            means=_means_from(doc["means"]),
            lam=float(doc["lambda"]),
            train_loss_trace=np.array(doc["train_loss_trace"], dtype=np.float64),
            fit_intercept=bool(doc["fit_intercept"]),
            converged=bool(doc["converged"]),
            grad_norm=float(doc["grad_norm"]),
        )
    try:
        kind = BaselineKind(kind)
    except ValueError:
        raise ConfigError(f"unknown model kind {kind!r}") from None
    ridge = _ridge_from(doc["ridge"]) if "ridge" in doc else None
    means = _means_from(doc["means"]) if "means" in doc else None
    return BaselineModel(kind, ridge, means, doc.get("source_mean_ages"))


def save_model(model, path):
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), indent=1))
    return path


def load_model(path):
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"model file not found: {path}")
    return model_from_dict(json.loads(path.read_text()))
