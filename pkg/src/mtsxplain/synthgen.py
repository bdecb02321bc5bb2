"""Synthetic two-class benchmarks with a known discriminative box.

Every instance has its own PCG64 stream derived from
``SeedSequence(seed, spawn_key=(split, index))``, so generating instances in
parallel gives exactly the sequential result and train/test never share draws.
Box convention: channels ``box_channels`` by time points ``box_time`` (half-open),
default channels 0-9 and time points 10-19 of a 20 x 100 series.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, MisalignedBox
from .tsdata import GroundTruthMask, LabeledDataset

TRAIN, TEST, LABELS = 0, 1, 2

# Base-process parameters; the benchmark generator they imitate does not publish them.
# The AR(1) innovations are scaled by sqrt(1 - coef**2) so every kind has unit
# marginal variance and x_0 ~ N(0, 1) is already the stationary law.
PERIODIC_FREQ = (2.0, 6.0)
PERIODIC_NOISE = 0.1
AR_COEF = 0.9


class Kind(enum.Enum):
    PSEUDO_PERIODIC = "pseudo-periodic"
    GAUSSIAN = "gaussian"
    AUTO_REGRESSIVE = "auto-regressive"


@dataclass(frozen=True)
class SynthSpec:
    kind: Kind = Kind.PSEUDO_PERIODIC
    n_train: int = 100
    n_test: int = 100
    d: int = 20
    L: int = 100
    box_channels: tuple[int, int] = (0, 10)
    box_time: tuple[int, int] = (10, 20)
    offset: float = 1.0
    seed: int = 0
    ar_coef: float = AR_COEF

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", Kind(self.kind))
        c0, c1 = self.box_channels
        t0, t1 = self.box_time
        if not (0 <= c0 < c1 <= self.d and 0 <= t0 < t1 <= self.L):
            raise DataError(
                f"box {self.box_channels} x {self.box_time} outside [0,{self.d}) x [0,{self.L})")
        if self.n_train < 2 or self.n_test < 2:
            raise DataError("each split needs at least 2 instances so both classes appear")

    @property
    def box_cells(self) -> int:
        return (self.box_channels[1] - self.box_channels[0]) * (self.box_time[1] - self.box_time[0])


def instance_rng(seed: int, split: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(split, index))))


def generate_base(spec: SynthSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one ``(d, L)`` series, channels independent."""
    d, L = spec.d, spec.L
    if spec.kind is Kind.GAUSSIAN:
        return rng.standard_normal((d, L))
    if spec.kind is Kind.PSEUDO_PERIODIC:
        freq = rng.uniform(*PERIODIC_FREQ, size=(d, 1))
        phase = rng.uniform(0.0, 2 * np.pi, size=(d, 1))
        t = np.arange(L)[None, :]
        return np.sin(2 * np.pi * freq * t / L + phase) + PERIODIC_NOISE * rng.standard_normal((d, L))
    if spec.kind is Kind.AUTO_REGRESSIVE:
        eps = rng.standard_normal((d, L))
        x = np.empty((d, L))
        x[:, 0] = eps[:, 0]
        innovation = np.sqrt(1.0 - spec.ar_coef**2)
        for t in range(1, L):
            x[:, t] = spec.ar_coef * x[:, t - 1] + innovation * eps[:, t]
        return x
    raise DataError(f"unknown kind {spec.kind}")


def inject_box(x, spec: SynthSpec, label: int) -> np.ndarray:
    if label not in (0, 1):
        raise DataError(f"label must be 0 or 1, got {label}")
    out = np.array(x, dtype=np.float64, copy=True)
    c0, c1 = spec.box_channels
    t0, t1 = spec.box_time
    out[c0:c1, t0:t1] += spec.offset if label == 1 else -spec.offset
    return out


def ground_truth_mask(spec: SynthSpec, segments_per_channel: int) -> GroundTruthMask:
    S = segments_per_channel
    if S < 1 or spec.L % S:
        raise MisalignedBox(f"L={spec.L} is not divisible into {S} segments")
    width = spec.L // S
    t0, t1 = spec.box_time
    if t0 % width or t1 % width:
        raise MisalignedBox(
            f"box time range [{t0}, {t1}) straddles segments of width {width}")
    mask = np.zeros((spec.d, S), dtype=np.int8)
    c0, c1 = spec.box_channels
    mask[c0:c1, t0 // width : t1 // width] = 1
    return GroundTruthMask(mask)


def balanced_labels(n: int, rng: np.random.Generator) -> np.ndarray:
    y = np.array([1] * math.ceil(n / 2) + [0] * (n // 2), dtype=np.int64)
    return rng.permutation(y)


def generate_split(spec: SynthSpec, split: int, n: int) -> LabeledDataset:
    y = balanced_labels(n, instance_rng(spec.seed, LABELS, split))
    X = np.stack([
        inject_box(generate_base(spec, instance_rng(spec.seed, split, i)), spec, int(y[i]))
        for i in range(n)
    ])
    name = f"{spec.kind.value}-{'train' if split == TRAIN else 'test'}"
    return LabeledDataset(X, y, 2, spec.seed, name)


def generate_dataset(spec: SynthSpec, segments_per_channel: int = 10):
    """Return ``(train, test, mask)`` for *spec*."""
    train = generate_split(spec, TRAIN, spec.n_train)
    test = generate_split(spec, TEST, spec.n_test)
    return train, test, ground_truth_mask(spec, segments_per_channel)
