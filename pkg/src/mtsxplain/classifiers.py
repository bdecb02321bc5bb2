"""Classifier pipelines over ``(n, d, L)`` arrays and their on-disk layout.

A saved model is a directory holding ``model.json`` (kind, format version and
construction parameters) plus CSV/NPZ sidecars for the fitted parameters.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import linear, rocket
from .errors import ParseError, ShapeMismatch
from .tsdata import LabeledDataset

MODEL_VERSION = 1


def _batch(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, None, :]
    if X.ndim != 3:
        raise ShapeMismatch(f"expected (n, d, L) input, got {X.shape}")
    return X


class RawRidge:
    """Ridge on the row-flattened series (the concatenated raw representation)."""

    kind = "ridge"

    def __init__(self, folds=5, head=None, shape=None):
        self.folds = folds
        self.head = head
        self.shape = shape

    def fit(self, ds: LabeledDataset) -> "RawRidge":
        self.shape = (ds.d, ds.L)
        self.head = linear.ridge_fit_cv(ds.X.reshape(ds.n, -1), ds.y, self.folds,
                                        classes=ds.n_classes)
        return self

    def decision_function(self, X):
        X = _batch(X)
        return self.head.decision_function(X.reshape(len(X), -1))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def params(self):
        return {"folds": self.folds, "shape": list(self.shape)}

    def _save(self, directory):
        linear.save_linear(self.head, directory / "head.csv")

    @classmethod
    def _load(cls, directory, params):
        return cls(params["folds"], linear.load_linear(directory / "head.csv"),
                   tuple(params["shape"]))


class _RocketPipeline:
    def __init__(self, n_kernels=2000, seed=0, num_threads=1, kernels=None, head=None):
        self.n_kernels = n_kernels
        self.seed = seed
        self.num_threads = num_threads
        self.kernels = kernels
        self.head = head

    def features(self, X):
        return rocket.transform_array(self.kernels, _batch(X), self.num_threads)

    def fit(self, ds: LabeledDataset):
        self.kernels = rocket.sample_kernels(self.n_kernels, ds.d, ds.L, self.seed)
        self.head = self._fit_head(self.features(ds.X), ds.y, ds.n_classes)
        return self

    def decision_function(self, X):
        return self.head.decision_function(self.features(X))

    def predict(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def params(self):
        return {"n_kernels": self.n_kernels, "seed": self.seed}

    def _save(self, directory):
        self.kernels.save(directory / "kernels.npz")
        linear.save_linear(self.head, directory / "head.csv")

    @classmethod
    def _load(cls, directory, params):
        return cls(params["n_kernels"], params["seed"], 1,
                   rocket.RocketTransform.load(directory / "kernels.npz"),
                   linear.load_linear(directory / "head.csv"))


class RocketLogistic(_RocketPipeline):
    kind = "rocket-logistic"

    def _fit_head(self, F, y, classes):
        return linear.logistic_fit(F, y, classes=classes)

    def predict_proba(self, X):
        return self.head.predict_proba(self.features(X))


class RocketRidge(_RocketPipeline):
    kind = "rocket-ridge"

    def _fit_head(self, F, y, classes):
        return linear.ridge_fit_cv(F, y, classes=classes)


class ChannelEnsemble:
    """ROCKET + logistic per channel, probabilities averaged."""

    kind = "rocket-logistic-chbych"

    def __init__(self, n_kernels=2000, seed=0, num_threads=1, ensemble=None):
        self.n_kernels = n_kernels
        self.seed = seed
        self.num_threads = num_threads
        self.ensemble = ensemble

    def fit(self, ds: LabeledDataset):
        self.ensemble = linear.ensemble_fit(
            ds, lambda sub: RocketLogistic(self.n_kernels, self.seed, self.num_threads).fit(sub))
        return self

    def predict_proba(self, X):
        return self.ensemble.predict_proba(_batch(X))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    @property
    def models(self):
        return self.ensemble.models

    def params(self):
        return {"n_kernels": self.n_kernels, "seed": self.seed, "d": self.ensemble.d}

    def _save(self, directory):
        for c, m in enumerate(self.ensemble.models):
            sub = directory / f"channel{c:03d}"
            sub.mkdir(exist_ok=True)
            m._save(sub)

    @classmethod
    def _load(cls, directory, params):
        subs = [RocketLogistic._load(directory / f"channel{c:03d}", params)
                for c in range(params["d"])]
        return cls(params["n_kernels"], params["seed"], 1,
                   linear.EnsembleModel(tuple(subs), params["d"]))


KINDS = {c.kind: c for c in (RawRidge, RocketLogistic, RocketRidge, ChannelEnsemble)}


def save_model(model, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {"format_version": MODEL_VERSION, "kind": model.kind, "params": model.params()}
    (directory / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    model._save(directory)


def load_model(directory):
    directory = Path(directory)
    meta = json.loads((directory / "model.json").read_text())
    if meta.get("format_version") != MODEL_VERSION:
        raise ParseError(f"unsupported model version {meta.get('format_version')}")
    kind = meta["kind"]
    if kind == "gapcnn":
        from .gapdcam import GapCnnModel
        return GapCnnModel.load(directory)
    if kind not in KINDS:
        raise ParseError(f"unknown model kind {kind!r}")
    return KINDS[kind]._load(directory, meta["params"])
