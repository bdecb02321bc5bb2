"""Segment-level kernel SHAP for univariate series, the two multivariate
strategies built on it, and an exact Shapley reference.

A *predict* function maps an ``(n, L)`` batch of univariate series to an
``(n, classes)`` probability matrix. Segments absent from a coalition are
replaced by a single background series (the per-time-point training mean).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError, ShapeMismatch, SingularSystem, TooManySegments
from .tsdata import SaliencyMap, Scale, as_series, concat_channels, unflatten

Predict = Callable[[np.ndarray], np.ndarray]

DEFAULT_MAX_SAMPLES = 2048
EXACT_MAX_SEGMENTS = 12
BATCH = 512


@dataclass(frozen=True)
class SegmentSpec:
    boundaries: np.ndarray

    @property
    def n_segments(self) -> int:
        return len(self.boundaries) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    @property
    def L(self) -> int:
        return int(self.boundaries[-1])


@dataclass(frozen=True)
class ShapExplanation:
    phi: np.ndarray
    base_value: float
    full_value: float
    efficiency_residual: float
    target_class: int
    n_evaluations: int
    exhaustive: bool


def segment_bounds(L: int, M: int) -> SegmentSpec:
    """Near-equal segments; the first ``L % M`` segments are one point longer."""
    if not 1 <= M <= L:
        raise DomainError(f"need 1 <= M <= L, got M={M}, L={L}")
    base, extra = divmod(L, M)
    widths = np.full(M, base, dtype=np.int64)
    widths[:extra] += 1
    return SegmentSpec(np.concatenate([[0], np.cumsum(widths)]))


def coalition_masks(coalitions, seg: SegmentSpec) -> np.ndarray:
    """Expand ``(k, M)`` segment coalitions to ``(k, L)`` time-point masks."""
    Z = np.atleast_2d(np.asarray(coalitions, dtype=bool))
    return np.repeat(Z, seg.widths, axis=1)


def mask_instance(x, coalition, background, seg: SegmentSpec | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    background = np.asarray(background, dtype=np.float64).reshape(-1)
    if background.shape != x.shape:
        raise ShapeMismatch(f"background length {background.size} != series length {x.size}")
    coalition = np.asarray(coalition, dtype=bool)
    seg = seg or segment_bounds(x.size, coalition.size)
    keep = coalition_masks(coalition, seg)[0]
    return np.where(keep, x, background)


def shapley_kernel_weight(M: int, z: int) -> float:
    if not 0 < z < M:
        raise DomainError(f"kernel weight undefined for coalition size {z} of {M}")
    return (M - 1) / (math.comb(M, z) * z * (M - z))


def _evaluate(predict: Predict, x, background, Z, seg, target) -> np.ndarray:
    out = np.empty(len(Z))
    for lo in range(0, len(Z), BATCH):
        keep = coalition_masks(Z[lo : lo + BATCH], seg)
        out[lo : lo + BATCH] = np.asarray(
            predict(np.where(keep, x, background)))[:, target]
    return out


def _all_coalitions(M: int) -> np.ndarray:
    codes = np.arange(2**M, dtype=np.int64)
    return ((codes[:, None] >> np.arange(M)) & 1).astype(bool)


def _sample_coalitions(M: int, n_samples: int, rng: np.random.Generator):
    """Coalitions and regression weights for the sampled mode.

    Size pairs ``(k, M - k)`` are enumerated completely, smallest first, while
    the budget covers them; the remaining kernel-weight mass goes to paired
    draws (a coalition and its complement) from the sizes left over.
    """
    sizes = np.arange(1, M)
    mass = (M - 1) / (sizes * (M - sizes))  # kernel weight summed over a size
    mass /= mass.sum()
    rows, weights = [], []
    left, budget = 1.0, n_samples
    done = set()
    for k in range(1, M // 2 + 1):
        pair = {k, M - k}
        count = sum(math.comb(M, z) for z in pair)
        pair_mass = sum(mass[z - 1] for z in pair)
        if count > budget or budget * pair_mass / left < count:
            break
        for z in sorted(pair):
            for combo in itertools.combinations(range(M), z):
                row = np.zeros(M, dtype=bool)
                row[list(combo)] = True
                rows.append(row)
                weights.append(mass[z - 1] / math.comb(M, z))
        done |= pair
        left -= pair_mass
        budget -= count
    rest = np.array([z for z in sizes if z not in done])
    if len(rest) and budget >= 2:
        p = mass[rest - 1] / mass[rest - 1].sum()
        half = budget // 2
        for z in rng.choice(rest, size=half, p=p):
            row = np.zeros(M, dtype=bool)
            row[rng.permutation(M)[:z]] = True
            rows += [row, ~row]
        weights += [left / (2 * half)] * (2 * half)
    return np.array(rows), np.array(weights)


def _solve(Z, weights, values, base, full):
    """Weighted least squares with sum(phi) = full - base enforced by elimination."""
    M = Z.shape[1]
    Zf = Z.astype(np.float64)
    y = values - base - Zf[:, -1] * (full - base)
    A = Zf[:, :-1] - Zf[:, -1:]
    sw = np.sqrt(weights)
    coef, _, rank, _ = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)
    if rank < M - 1:
        raise SingularSystem(f"coalition design has rank {rank} < {M - 1}; draw more samples")
    return np.append(coef, (full - base) - coef.sum())


def kernel_shap(predict: Predict, x, M: int, n_samples: int | None = None, background=None,
                target_class: int | None = None, seed: int = 0) -> ShapExplanation:
    """Kernel SHAP over *M* contiguous segments of the univariate series *x*.

    Enumerates every coalition when ``2**M <= n_samples``; otherwise spends
    ``n_samples`` evaluations on complete small/large coalition sizes plus
    paired random draws. Deterministic given *seed*.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    background = np.zeros_like(x) if background is None else \
        np.asarray(background, dtype=np.float64).reshape(-1)
    if background.shape != x.shape:
        raise ShapeMismatch(f"background length {background.size} != series length {x.size}")
    seg = segment_bounds(x.size, M)
    if n_samples is None:
        n_samples = min(2**M, DEFAULT_MAX_SAMPLES) if M < 63 else DEFAULT_MAX_SAMPLES
    ends = np.asarray(predict(np.stack([x, background])))
    if target_class is None:
        target_class = int(np.argmax(ends[0]))
    full, base = float(ends[0, target_class]), float(ends[1, target_class])
    if M == 1:
        phi = np.array([full - base])
        return ShapExplanation(phi, base, full, 0.0, target_class, 2, True)

    exhaustive = M < 63 and 2**M <= n_samples
    if exhaustive:
        Z = _all_coalitions(M)[1:-1]
        sizes = Z.sum(axis=1)
        weights = np.array([shapley_kernel_weight(M, int(s)) for s in range(M + 1)
                            if 0 < s < M])[sizes - 1]
    else:
        if n_samples < M + 2:
            raise DomainError(f"sampled kernel SHAP needs n_samples >= M + 2 = {M + 2}")
        Z, weights = _sample_coalitions(M, n_samples, np.random.default_rng(seed))
    values = _evaluate(predict, x, background, Z, seg, target_class)
    phi = _solve(Z, weights, values, base, full)
    residual = float(phi.sum() + base - full)
    return ShapExplanation(phi, base, full, residual, target_class, len(Z) + 2, exhaustive)


def exact_shap(predict: Predict, x, M: int, background=None,
               target_class: int | None = None) -> ShapExplanation:
    """Shapley values by direct enumeration of all ``2**M`` coalitions."""
    if M > EXACT_MAX_SEGMENTS:
        raise TooManySegments(f"exact Shapley limited to {EXACT_MAX_SEGMENTS} segments, got {M}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    background = np.zeros_like(x) if background is None else \
        np.asarray(background, dtype=np.float64).reshape(-1)
    seg = segment_bounds(x.size, M)
    Z = _all_coalitions(M)
    if target_class is None:
        target_class = int(np.argmax(np.asarray(predict(x[None]))[0]))
    v = _evaluate(predict, x, background, Z, seg, target_class)
    sizes = Z.sum(axis=1)
    fact = [math.factorial(k) for k in range(M + 1)]
    coef = np.array([fact[s] * fact[M - s - 1] / fact[M] if s < M else 0.0 for s in sizes])
    phi = np.empty(M)
    codes = np.arange(2**M)
    for i in range(M):
        without = (codes >> i) & 1 == 0
        S = codes[without]
        phi[i] = np.sum(coef[S] * (v[S | (1 << i)] - v[S]))
    full, base = float(v[-1]), float(v[0])
    return ShapExplanation(phi, base, full, float(phi.sum() + base - full), target_class,
                           len(Z), True)


def explain_concatenated(predict: Predict, x, per_channel_segments: int = 10,
                         n_samples: int | None = None, background=None,
                         target_class: int | None = None, seed: int = 0):
    """Explain a classifier of the concatenated series; returns (map, explanation).

    The map is ``(d, per_channel_segments)``; with ``per_channel_segments``
    dividing ``L`` no segment crosses a channel boundary.
    """
    x = as_series(x)
    d, L = x.shape
    flat = concat_channels(x)[0]
    bg = None if background is None else np.asarray(background, dtype=np.float64).reshape(-1)
    ex = kernel_shap(predict, flat, d * per_channel_segments, n_samples, bg, target_class, seed)
    width = L // per_channel_segments if L % per_channel_segments == 0 else 1
    w = SaliencyMap(unflatten(ex.phi, d, per_channel_segments), Scale.RAW, width)
    return w, ex


def channel_predictors(models) -> list[Predict]:
    """Wrap per-channel models (``predict_proba`` on ``(n, 1, L)``) as univariate predictors."""
    return [(lambda Xb, m=m: m.predict_proba(Xb[:, None, :])) for m in models]


def explain_channel_by_channel(predictors, x, segments: int = 10, n_samples: int | None = None,
                               backgrounds=None, target_class: int | None = None,
                               seed: int = 0):
    """Explain each channel's own model and stack the rows; returns (map, explanations).

    *target_class* should be the ensemble's prediction for *x*; the same seed is
    used for every channel so permuting channels permutes the rows.
    """
    x = as_series(x)
    d, L = x.shape
    if len(predictors) != d:
        raise ShapeMismatch(f"{len(predictors)} channel models for {d} channels")
    rows, exps = [], []
    for c in range(d):
        bg = None if backgrounds is None else np.asarray(backgrounds)[c]
        ex = kernel_shap(predictors[c], x[c], segments, n_samples, bg, target_class, seed)
        rows.append(ex.phi)
        exps.append(ex)
    width = L // segments if L % segments == 0 else 1
    return SaliencyMap(np.stack(rows), Scale.RAW, width), exps
