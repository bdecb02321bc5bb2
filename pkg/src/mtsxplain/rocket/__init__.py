"""ROCKET random convolutional kernel transform.

Each kernel convolves a random subset of channels with independent centred
weight vectors, sums the responses, and emits two features: the proportion of
positive values (PPV) and the maximum. The convolution runs in a compiled
extension when available (see ``BACKEND``).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ParseError, ShapeMismatch
from ..tsdata import LabeledDataset, as_series
from . import _backend
from ._backend import BACKEND

__all__ = ["BACKEND", "KernelSpec", "RocketTransform", "sample_kernels", "apply_kernel",
           "transform", "transform_array"]

CANDIDATE_LENGTHS = (7, 9, 11)
FORMAT_VERSION = 1


@dataclass(frozen=True)
class KernelSpec:
    length: int
    weights: np.ndarray  # (len(channel_subset), length), each row mean zero
    bias: float
    dilation: int
    padding: int
    channel_subset: tuple[int, ...]

    @property
    def receptive_field(self) -> int:
        return self.dilation * (self.length - 1) + 1


@dataclass(frozen=True)
class RocketTransform:
    """Packed kernel parameters, laid out for the compiled kernel."""

    weights: np.ndarray
    lengths: np.ndarray
    biases: np.ndarray
    dilations: np.ndarray
    paddings: np.ndarray
    n_channels: np.ndarray
    channel_indices: np.ndarray
    fitted_for: tuple[int, int]
    seed: int = 0

    @property
    def n_kernels(self) -> int:
        return len(self.lengths)

    @property
    def n_features(self) -> int:
        return 2 * self.n_kernels

    @property
    def kernels(self) -> list[KernelSpec]:
        out, wo, co = [], 0, 0
        for k in range(self.n_kernels):
            length, nc = int(self.lengths[k]), int(self.n_channels[k])
            out.append(KernelSpec(
                length=length,
                weights=self.weights[wo : wo + nc * length].reshape(nc, length),
                bias=float(self.biases[k]),
                dilation=int(self.dilations[k]),
                padding=int(self.paddings[k]),
                channel_subset=tuple(int(c) for c in self.channel_indices[co : co + nc]),
            ))
            wo += nc * length
            co += nc
        return out

    @classmethod
    def from_kernels(cls, kernels, fitted_for, seed=0) -> "RocketTransform":
        return cls(
            weights=np.concatenate([np.asarray(k.weights, float).reshape(-1) for k in kernels]),
            lengths=np.array([k.length for k in kernels], dtype=np.int64),
            biases=np.array([k.bias for k in kernels], dtype=np.float64),
            dilations=np.array([k.dilation for k in kernels], dtype=np.int64),
            paddings=np.array([k.padding for k in kernels], dtype=np.int64),
            n_channels=np.array([len(k.channel_subset) for k in kernels], dtype=np.int64),
            channel_indices=np.concatenate(
                [np.asarray(k.channel_subset, dtype=np.int64) for k in kernels]),
            fitted_for=tuple(fitted_for),
            seed=seed,
        )

    def save(self, path) -> None:
        np.savez(
            path, format_version=FORMAT_VERSION, weights=self.weights, lengths=self.lengths,
            biases=self.biases, dilations=self.dilations, paddings=self.paddings,
            n_channels=self.n_channels, channel_indices=self.channel_indices,
            fitted_for=np.array(self.fitted_for, dtype=np.int64), seed=self.seed,
        )

    @classmethod
    def load(cls, path) -> "RocketTransform":
        with np.load(Path(path)) as z:
            if int(z["format_version"]) != FORMAT_VERSION:
                raise ParseError(f"unsupported kernel file version {int(z['format_version'])}")
            return cls(
                weights=z["weights"], lengths=z["lengths"], biases=z["biases"],
                dilations=z["dilations"], paddings=z["paddings"], n_channels=z["n_channels"],
                channel_indices=z["channel_indices"],
                fitted_for=tuple(int(v) for v in z["fitted_for"]), seed=int(z["seed"]),
            )


def sample_kernels(n_kernels: int, d: int, L: int, seed: int = 0) -> RocketTransform:
    if n_kernels < 1:
        raise ValueError("n_kernels must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    kernels = []
    for _ in range(n_kernels):
        length = int(rng.choice(CANDIDATE_LENGTHS))
        n_ch = int(rng.integers(1, d + 1))
        subset = tuple(int(c) for c in np.sort(rng.choice(d, size=n_ch, replace=False)))
        w = rng.standard_normal((n_ch, length))
        w -= w.mean(axis=1, keepdims=True)
        bias = float(rng.uniform(-1.0, 1.0))
        upper = np.log2((L - 1) / (length - 1)) if L > length else 0.0
        dilation = int(2 ** rng.uniform(0.0, max(upper, 0.0)))
        padding = ((length - 1) * dilation) // 2 if rng.integers(2) == 1 else 0
        if dilation * (length - 1) + 1 > L + 2 * padding:
            padding = ((length - 1) * dilation) // 2
        kernels.append(KernelSpec(length, w, bias, dilation, padding, subset))
    return RocketTransform.from_kernels(kernels, (d, L), seed)


def _as_batch(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, None, :]
    if X.ndim != 3:
        raise ShapeMismatch(f"expected (n, d, L) input, got {X.shape}")
    return np.ascontiguousarray(X)


def transform_array(t: RocketTransform, X, num_threads: int = 1, backend=None) -> np.ndarray:
    """Feature matrix ``(n, 2 * n_kernels)`` with (ppv, max) pairs per kernel."""
    X = _as_batch(X)
    if X.shape[1:] != tuple(t.fitted_for):
        raise ShapeMismatch(f"kernels fitted for (d, L)={t.fitted_for}, input is {X.shape[1:]}")
    fn = backend or _backend.apply_kernels
    return fn(X, t.weights, t.lengths, t.biases, t.dilations, t.paddings, t.n_channels,
              t.channel_indices, num_threads)


def transform(t: RocketTransform, ds: LabeledDataset, num_threads: int = 1) -> np.ndarray:
    return transform_array(t, ds.X, num_threads)


def apply_kernel(x, k: KernelSpec) -> tuple[float, float]:
    """Reference single-kernel evaluation on one ``(d, L)`` series."""
    x = as_series(x)
    if max(k.channel_subset) >= x.shape[0]:
        raise ShapeMismatch(f"kernel uses channel {max(k.channel_subset)}, series has {x.shape[0]}")
    t = RocketTransform.from_kernels([k], x.shape)
    ppv, mx = transform_array(t, x[None])[0]
    return float(ppv), float(mx)
