"""Core data model: multivariate series, labeled datasets, saliency maps.

A multivariate series is a ``(d, L)`` float64 array (channels by time points).
Datasets stack instances into an ``(n, d, L)`` array. Everything here is a pure
function over immutable values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NonDivisibleWindow,
    ShapeMismatch,
    DataError,
)


class Scale(enum.Enum):
    RAW = "raw"
    RESCALED = "0to100"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


def as_series(values) -> np.ndarray:
    """Validate and return a ``(d, L)`` float64 copy of *values*."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeMismatch(f"expected a (d, L) matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    return x


@dataclass(frozen=True)
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    n_classes: int
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 3:
            raise ShapeMismatch(f"dataset array must be (n, d, L), got {X.shape}")
        if len(X) != len(y):
            raise DimensionMismatch(f"{len(X)} instances but {len(y)} labels")
        if len(y) and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(X)):
            raise DataError("dataset contains non-finite values")
        object.__setattr__(self, "X", _frozen(X))
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def L(self) -> int:
        return self.X.shape[2]

    @property
    def instances(self) -> list[np.ndarray]:
        return list(self.X)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(self.X[idx], self.y[idx], self.n_classes, self.seed, self.name)

    def channel(self, c: int) -> "LabeledDataset":
        """Univariate dataset holding channel *c* only."""
        return LabeledDataset(self.X[:, c : c + 1, :], self.y, self.n_classes, self.seed,
                              f"{self.name}[ch{c}]")

    def concatenated(self) -> "LabeledDataset":
        n, d, L = self.X.shape
        return LabeledDataset(self.X.reshape(n, 1, d * L), self.y, self.n_classes, self.seed,
                              f"{self.name}-concat")


@dataclass(frozen=True)
class SaliencyMap:
    weights: np.ndarray
    scale: Scale = Scale.RAW
    segment_width: int = 1

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim == 1:
            w = w[None, :]
        if w.ndim != 2:
            raise ShapeMismatch(f"saliency must be a (d, S) matrix, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise DataError("saliency contains non-finite values")
        if self.scale is Scale.RESCALED and w.size and (w.min() < 0 or w.max() > 100):
            raise DataError("rescaled saliency must lie in [0, 100]")
        if self.segment_width < 1:
            raise DataError("segment_width must be positive")
        object.__setattr__(self, "weights", _frozen(w))

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape


@dataclass(frozen=True)
class GroundTruthMask:
    mask: np.ndarray = field()

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2:
            raise ShapeMismatch(f"mask must be 2-D, got {m.shape}")
        if not np.isin(m, (0, 1)).all():
            raise DataError("mask entries must be 0 or 1")
        m = m.astype(np.int8)
        if m.min() == m.max():
            raise DataError("mask needs at least one informative and one uninformative cell")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


def concat_channels(x) -> np.ndarray:
    """Row-major concatenation of all channels into a ``(1, d*L)`` series."""
    x = as_series(x)
    return x.reshape(1, -1).copy()


def unflatten(v, channels: int, per_channel: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size != channels * per_channel:
        raise ShapeMismatch(
            f"vector of length {v.size} cannot be reshaped to ({channels}, {per_channel})")
    return v.reshape(channels, per_channel).copy()


def unflatten_saliency(v: SaliencyMap, channels: int, per_channel: int) -> SaliencyMap:
    if v.weights.shape[0] != 1:
        raise ShapeMismatch(f"expected a single-row saliency, got {v.weights.shape}")
    return SaliencyMap(unflatten(v.weights, channels, per_channel), v.scale, v.segment_width)


def pool_saliency(w: SaliencyMap, window: int) -> SaliencyMap:
    """Average ``window`` consecutive cells of every channel."""
    if window < 1:
        raise NonDivisibleWindow(f"window must be positive, got {window}")
    d, S = w.weights.shape
    if S % window:
        raise NonDivisibleWindow(f"{S} columns are not divisible by window {window}")
    pooled = w.weights.reshape(d, S // window, window).mean(axis=2)
    return SaliencyMap(pooled, Scale.RAW, w.segment_width * window)


def upsample_saliency(w: SaliencyMap, L: int) -> np.ndarray:
    """Repeat segment weights over their time span; inverse of pooling for shape."""
    d, S = w.weights.shape
    if S == L:
        return w.weights.copy()
    if L % S:
        raise NonDivisibleWindow(f"cannot expand {S} segments to {L} time points")
    return np.repeat(w.weights, L // S, axis=1)


def rescale_abs_minmax(w: SaliencyMap) -> SaliencyMap:
    """Absolute value, then min-max over the whole map into [0, 100].

    A constant map has no ordering information and maps to all zeros.
    """
    v = np.abs(w.weights)
    lo, hi = v.min(), v.max()
    if hi == lo:
        out = np.zeros_like(v)
    else:
        out = (v - lo) / (hi - lo) * 100.0  # max lands exactly on 100
        np.clip(out, 0.0, 100.0, out=out)
    return SaliencyMap(out, Scale.RESCALED, w.segment_width)


def align_to(w: SaliencyMap, segments: int) -> SaliencyMap:
    """Pool a map down to *segments* columns per channel (no-op when already there)."""
    S = w.weights.shape[1]
    if S == segments:
        return w
    if S % segments:
        raise NonDivisibleWindow(f"{S} columns cannot be pooled to {segments}")
    return pool_saliency(w, S // segments)
