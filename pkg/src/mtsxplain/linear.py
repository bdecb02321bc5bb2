"""Linear classification heads: cross-validated ridge, multinomial logistic,
and a per-channel probability-averaging ensemble."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, DegenerateFold, NonFinite, ParseError, ShapeMismatch
from .tsdata import LabeledDataset, SaliencyMap, Scale

ALPHAS = np.logspace(-3, 3, 10)


# --------------------------------------------------------------------------- ridge

@dataclass(frozen=True)
class RidgeModel:
    weights: np.ndarray  # (classes, features)
    intercepts: np.ndarray  # (classes,)
    alpha: float
    classes: int
    cv_errors: np.ndarray | None = None

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
        if X.shape[1] != self.weights.shape[1]:
            raise ShapeMismatch(f"model expects {self.weights.shape[1]} features, got {X.shape[1]}")
        return X @ self.weights.T + self.intercepts

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


def _targets(y, classes) -> np.ndarray:
    Y = -np.ones((len(y), classes))
    Y[np.arange(len(y)), y] = 1.0
    return Y


def _ridge_path(X, Y, alphas):
    """Closed-form ridge coefficients for every alpha from one SVD of centred data."""
    xm, ym = X.mean(axis=0), Y.mean(axis=0)
    U, s, Vt = np.linalg.svd(X - xm, full_matrices=False)
    UtY = U.T @ (Y - ym)
    for a in alphas:
        W = Vt.T @ ((s / (s**2 + a))[:, None] * UtY)  # (features, classes)
        yield a, W, ym - xm @ W


def stratified_folds(y, folds: int) -> np.ndarray:
    """Fold id per sample: each class is dealt round-robin over the folds."""
    fold = np.empty(len(y), dtype=np.int64)
    offset = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        fold[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    return fold


def ridge_fit(X, y, alpha: float, classes: int | None = None) -> RidgeModel:
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    y = np.asarray(y, dtype=np.int64)
    classes = int(classes or y.max() + 1)
    (_, W, b), = _ridge_path(X, _targets(y, classes), [alpha])
    return RidgeModel(W.T.copy(), b, float(alpha), classes)


def ridge_fit_cv(X, y, folds: int = 5, alphas: Sequence[float] = ALPHAS,
                 classes: int | None = None) -> RidgeModel:
    """One-vs-rest ridge on +-1 targets; alpha picked by mean CV squared error."""
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    y = np.asarray(y, dtype=np.int64)
    classes = int(classes or y.max() + 1)
    if len(np.unique(y)) < 2:
        raise DataError("ridge needs at least two classes")
    if len(y) < folds:
        raise DataError(f"{len(y)} samples cannot be split into {folds} folds")
    alphas = np.asarray(alphas, dtype=np.float64)
    Y = _targets(y, classes)
    fold = stratified_folds(y, folds)
    errors = np.zeros(len(alphas))
    for f in range(folds):
        tr, te = fold != f, fold == f
        if len(np.unique(y[tr])) < len(np.unique(y)):
            raise DegenerateFold(f"training part of fold {f} lacks a class")
        for i, (_, W, b) in enumerate(_ridge_path(X[tr], Y[tr], alphas)):
            errors[i] += np.mean((X[te] @ W + b - Y[te]) ** 2) / folds
    best = int(np.argmin(errors))
    (_, W, b), = _ridge_path(X, Y, [alphas[best]])
    return RidgeModel(W.T.copy(), b, float(alphas[best]), classes, errors)


def ridge_explanation(m: RidgeModel, class_of_interest: int, d: int, L: int) -> SaliencyMap:
    """Model weights of one class, laid back out as a ``(d, L)`` map."""
    if m.weights.shape[1] != d * L:
        raise ShapeMismatch(
            f"model has {m.weights.shape[1]} features; a {d}x{L} map needs a model on raw series")
    return SaliencyMap(m.weights[class_of_interest].reshape(d, L), Scale.RAW, 1)


# ------------------------------------------------------------------------ logistic

def softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray  # (features, classes), acting on standardised features
    intercepts: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    n_iter: int = 0
    max_iter_reached: bool = False

    @property
    def classes(self) -> int:
        return len(self.intercepts)

    def standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
        if X.shape[1] != len(self.mean):
            raise ShapeMismatch(f"model expects {len(self.mean)} features, got {X.shape[1]}")
        return (X - self.mean) / self.scale

    def decision_function(self, X) -> np.ndarray:
        return self.standardize(X) @ self.weights + self.intercepts

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)


def logistic_loss_grad(W, b, Xs, Y, l2):
    """Mean cross-entropy plus ``l2/2 * ||W||^2`` and its gradient."""
    n = len(Xs)
    P = softmax(Xs @ W + b)
    loss = -np.sum(Y * np.log(np.clip(P, 1e-300, None))) / n + 0.5 * l2 * np.sum(W * W)
    G = (P - Y) / n
    return loss, Xs.T @ G + l2 * W, G.sum(axis=0)


def logistic_fit(X, y, max_iter: int = 1000, lr: float = 1e-2, l2: float = 1e-3,
                 tol: float = 1e-6, classes: int | None = None) -> LogisticModel:
    """Full-batch gradient descent on standardised features.

    Weights start at zero and intercepts at the log class priors, so the fit is
    deterministic and an uninformative input lands on the prior immediately.
    """
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    y = np.asarray(y, dtype=np.int64)
    if not np.all(np.isfinite(X)):
        raise NonFinite("non-finite features")
    classes = int(classes or y.max() + 1)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Xs = (X - mean) / scale
    Y = np.zeros((len(y), classes))
    Y[np.arange(len(y)), y] = 1.0
    prior = np.clip(Y.mean(axis=0), 1e-12, None)
    b = np.log(prior) - np.log(prior).mean()
    W = np.zeros((X.shape[1], classes))
    it = 0
    for it in range(1, max_iter + 1):
        _, gW, gb = logistic_loss_grad(W, b, Xs, Y, l2)
        if np.sqrt(np.sum(gW * gW) + np.sum(gb * gb)) < tol:
            break
        W -= lr * gW
        b -= lr * gb
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise NonFinite(f"logistic regression diverged at iteration {it}; lower lr (={lr})")
    else:
        return LogisticModel(W, b, mean, scale, max_iter, True)
    return LogisticModel(W, b, mean, scale, it, False)


# ------------------------------------------------------------------------ ensemble

@dataclass(frozen=True)
class EnsembleModel:
    """Averages class probabilities of one univariate model per channel."""

    models: tuple = field()
    d: int = 0

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if len(self.models) != self.d:
            raise ShapeMismatch(f"{len(self.models)} sub-models for {self.d} channels")

    def predict_proba(self, X) -> np.ndarray:
        return ensemble_predict_proba(self, X)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)


def ensemble_fit(ds: LabeledDataset, trainer: Callable[[LabeledDataset], object]) -> EnsembleModel:
    return EnsembleModel(tuple(trainer(ds.channel(c)) for c in range(ds.d)), ds.d)


def ensemble_predict_proba(m: EnsembleModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[1] != m.d:
        raise ShapeMismatch(f"ensemble over {m.d} channels got input {X.shape}")
    P = m.models[0].predict_proba(X[:, 0:1])
    for c in range(1, m.d):
        P = P + m.models[c].predict_proba(X[:, c : c + 1])
    return P / m.d


# --------------------------------------------------------------------- sidecars

def _row(name, values) -> str:
    return ",".join([name] + [repr(float(v)) for v in np.ravel(values)])


def save_linear(model, path) -> None:
    """Versioned CSV sidecar: header, then one named row per parameter vector."""
    if isinstance(model, RidgeModel):
        lines = [f"linmodel,v1,kind=ridge,classes={model.classes},"
                 f"features={model.weights.shape[1]},alpha={model.alpha!r}",
                 _row("intercept", model.intercepts)]
        lines += [_row(f"w{c}", model.weights[c]) for c in range(model.classes)]
    elif isinstance(model, LogisticModel):
        lines = [f"linmodel,v1,kind=logistic,classes={model.classes},"
                 f"features={len(model.mean)},n_iter={model.n_iter}",
                 _row("intercept", model.intercepts), _row("mean", model.mean),
                 _row("scale", model.scale)]
        lines += [_row(f"w{c}", model.weights[:, c]) for c in range(model.classes)]
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_linear(path):
    lines = Path(path).read_text(encoding="utf-8").strip("\n").split("\n")
    head = lines[0].split(",")
    if head[:2] != ["linmodel", "v1"]:
        raise ParseError(f"not a linmodel v1 file: {lines[0]!r}", line=1)
    meta = dict(kv.split("=", 1) for kv in head[2:])
    rows = {}
    for i, line in enumerate(lines[1:], start=2):
        name, *vals = line.split(",")
        try:
            rows[name] = np.array([float(v) for v in vals])
        except ValueError:
            raise ParseError("malformed number", line=i) from None
    C = int(meta["classes"])
    W = np.stack([rows[f"w{c}"] for c in range(C)])
    if meta["kind"] == "ridge":
        return RidgeModel(W, rows["intercept"], float(meta["alpha"]), C)
    if meta["kind"] == "logistic":
        return LogisticModel(W.T.copy(), rows["intercept"], rows["mean"], rows["scale"],
                             int(meta.get("n_iter", 0)))
    raise ParseError(f"unknown model kind {meta['kind']!r}", line=1)
