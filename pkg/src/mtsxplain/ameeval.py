"""Perturbation-based faithfulness evaluation.

The most salient fraction of every test instance is replaced by dataset
statistics and referee classifiers, trained on the clean training split, are
scored on the perturbed test set. Explainers whose perturbations make the
accuracy fall faster (smaller area under the drop curve) are more faithful.

Referees see the row-concatenated series; perturbation happens on the
``(d, L)`` form, which selects the same cells because the tie-break order
(channel, time) is the concatenation order.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import RawRidge, RocketLogistic, RocketRidge
from .errors import DataError, DegenerateSpread, NotRescaled, ShapeMismatch
from .tsdata import LabeledDataset, SaliencyMap, Scale, rescale_abs_minmax, upsample_saliency

log = logging.getLogger(__name__)

FRACTIONS = tuple(round(0.1 * i, 1) for i in range(11))
REFEREE_NOTE = ("referees are in-repo substitutes: ROCKET+logistic, ROCKET+ridge "
                "and ridge on the concatenated raw series")


class Statistic(enum.Enum):
    MEAN = "mean"
    GAUSSIAN = "gaussian"


class Scope(enum.Enum):
    LOCAL = "local"
    GLOBAL = "global"


@dataclass(frozen=True)
class PerturbationStrategy:
    statistic: Statistic
    scope: Scope

    @property
    def name(self) -> str:
        return f"{self.statistic.value}-{self.scope.value}"

    @classmethod
    def parse(cls, text: str) -> "PerturbationStrategy":
        try:
            stat, scope = text.split("-")
            return cls(Statistic(stat), Scope(scope))
        except ValueError:
            raise DataError(f"unknown perturbation strategy {text!r}") from None


STRATEGIES = tuple(PerturbationStrategy(s, c) for s in Statistic for c in Scope)


@dataclass(frozen=True)
class DatasetStats:
    local_mean: np.ndarray  # (d, L)
    local_std: np.ndarray
    global_mean: np.ndarray  # (d,)
    global_std: np.ndarray

    def mean_std(self, scope: Scope, L: int):
        if scope is Scope.LOCAL:
            return self.local_mean, self.local_std
        return (np.repeat(self.global_mean[:, None], L, axis=1),
                np.repeat(self.global_std[:, None], L, axis=1))


@dataclass(frozen=True)
class AccuracyDropCurve:
    fractions: tuple
    accuracies: tuple
    referee: str
    strategy: str
    explainer: str

    def __post_init__(self):
        if len(self.fractions) != len(self.accuracies):
            raise ShapeMismatch(f"{len(self.fractions)} fractions but {len(self.accuracies)} accuracies")


@dataclass
class AmeeReport:
    explainers: list
    average_auc: dict
    scaled_auc: dict
    power: dict
    rank: dict
    referee_accuracy: dict = field(default_factory=dict)
    excluded_referees: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)

    def rows(self):
        for e in sorted(self.explainers, key=lambda e: self.rank[e]):
            yield e, self.average_auc[e], self.scaled_auc[e], self.power[e], self.rank[e]


def dataset_stats(ds: LabeledDataset) -> DatasetStats:
    if ds.n < 2:
        raise DataError("statistics need at least 2 instances")
    X = ds.X
    flat = X.transpose(1, 0, 2).reshape(ds.d, -1)
    return DatasetStats(X.mean(axis=0), X.std(axis=0, ddof=1),
                        flat.mean(axis=1), flat.std(axis=1, ddof=1))


def _topk_count(fraction: float, cells: int) -> int:
    # round first so 0.05 * 2000 is exactly 100
    return min(cells, math.ceil(round(fraction * cells, 9)))


def perturb_topk(x, w: SaliencyMap, fraction: float, strategy: PerturbationStrategy,
                 stats: DatasetStats, rng: np.random.Generator | None = None) -> np.ndarray:
    """Replace the ``ceil(fraction * d * L)`` most salient cells of *x*.

    Ties are broken by (channel, time) order. Gaussian strategies draw a
    standard-normal ``(d, L)`` matrix from *rng* and use ``mean + std * z``.
    """
    if not 0.0 <= fraction <= 1.0:
        raise DataError(f"fraction must be in [0, 1], got {fraction}")
    if w.scale is not Scale.RESCALED:
        raise NotRescaled("perturbation needs a map rescaled to [0, 100]")
    x = np.array(x, dtype=np.float64)
    d, L = x.shape
    wu = upsample_saliency(w, L)
    if wu.shape != (d, L):
        raise ShapeMismatch(f"saliency {w.shape} does not cover series {x.shape}")
    mean, std = stats.mean_std(strategy.scope, L)
    if strategy.statistic is Statistic.GAUSSIAN:
        if rng is None:
            raise DataError("Gaussian perturbation needs an rng")
        value = mean + std * rng.standard_normal((d, L))
    else:
        value = mean
    k = _topk_count(fraction, d * L)
    if k == 0:
        return x
    cells = np.argsort(-wu.reshape(-1), kind="stable")[:k]
    out = x.reshape(-1)
    out[cells] = value.reshape(-1)[cells]
    return out.reshape(d, L)


def instance_rng(seed: int, index: int) -> np.random.Generator:
    """Noise stream of one test instance, shared by every fraction and explainer."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def _rescaled(w: SaliencyMap) -> SaliencyMap:
    return w if w.scale is Scale.RESCALED else rescale_abs_minmax(w)


def perturbed_set(test: LabeledDataset, explanations, fraction, strategy, stats, seed) -> np.ndarray:
    return np.stack([perturb_topk(x, w, fraction, strategy, stats, instance_rng(seed, i))
                     for i, (x, w) in enumerate(zip(test.X, explanations))])


def _accuracy(referee, X, y) -> float:
    n = len(X)
    return float(np.mean(referee.predict(X.reshape(n, 1, -1)) == y))


def drop_curve(referee, test: LabeledDataset, explanations, strategy: PerturbationStrategy,
               fractions=FRACTIONS, stats: DatasetStats | None = None, seed: int = 0,
               referee_name: str = "referee", explainer_name: str = "explainer") -> AccuracyDropCurve:
    """Referee accuracy on the perturbed test set at every fraction."""
    if len(explanations) != test.n:
        raise ShapeMismatch(f"{len(explanations)} explanations for {test.n} test instances")
    stats = stats or dataset_stats(test)
    maps = [_rescaled(w) for w in explanations]
    acc = tuple(_accuracy(referee, perturbed_set(test, maps, f, strategy, stats, seed), test.y)
                for f in fractions)
    return AccuracyDropCurve(tuple(fractions), acc, referee_name, strategy.name, explainer_name)


def curve_auc(c: AccuracyDropCurve) -> float:
    """Trapezoidal area normalised by the fraction span."""
    f = np.asarray(c.fractions, dtype=np.float64)
    a = np.asarray(c.accuracies, dtype=np.float64)
    if len(f) < 2 or f[-1] == f[0]:
        raise DataError("AUC needs at least two distinct fractions")
    return float(np.sum(np.diff(f) * (a[1:] + a[:-1]) / 2) / (f[-1] - f[0]))


def aggregate_and_rank(aucs: dict) -> AmeeReport:
    """*aucs* maps ``(explainer, referee, strategy)`` (or bare explainer names) to AUC."""
    groups: dict = {}
    for key, v in sorted(aucs.items(), key=lambda kv: str(kv[0])):
        groups.setdefault(key[0] if isinstance(key, tuple) else key, []).append(float(v))
    if len(groups) < 2:
        raise DataError("ranking needs at least two explainers")
    avg = {e: float(np.mean(v)) for e, v in groups.items()}
    lo, hi = min(avg.values()), max(avg.values())
    if hi == lo:
        raise DegenerateSpread("every explainer has the same average AUC")
    scaled = {e: (a - lo) / (hi - lo) for e, a in avg.items()}
    power = {e: 1.0 - s for e, s in scaled.items()}
    order = sorted(avg, key=lambda e: (avg[e], e))
    rank = {e: i + 1 for i, e in enumerate(order)}
    return AmeeReport(order, avg, scaled, power, rank)


def default_referees(n_kernels: int = 2000, seeds=(1, 2), num_threads: int = 1) -> dict:
    return {
        "rocket-logistic": RocketLogistic(n_kernels, seeds[0], num_threads),
        "rocket-ridge": RocketRidge(n_kernels, seeds[1], num_threads),
        "ridge": RawRidge(),
    }


def run_amee(train: LabeledDataset, test: LabeledDataset, explainers: dict, referees: dict | None = None,
             strategies=STRATEGIES, fractions=FRACTIONS, seed: int = 0, jobs: int = 1) -> AmeeReport:
    """Full cross product of explainers x referees x strategies.

    *explainers* maps a name to one saliency map per test instance. Referees at
    or below the majority-class rate on the clean test set are dropped.
    """
    referees = default_referees() if referees is None else referees
    t0 = time.perf_counter()
    ctrain = train.concatenated()
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        fitted = dict(zip(referees, pool.map(lambda r: r.fit(ctrain), referees.values())))
    majority = np.bincount(test.y, minlength=test.n_classes).max() / test.n
    clean = {name: _accuracy(r, test.X, test.y) for name, r in fitted.items()}
    excluded = [name for name, a in clean.items() if a <= majority]
    for name in excluded:
        log.warning("referee %s excluded: clean accuracy %.3f <= majority rate %.3f",
                    name, clean[name], majority)
    active = [name for name in fitted if name not in excluded]
    if not active:
        raise DataError("no referee beats the majority baseline")
    stats = dataset_stats(test)
    maps = {e: [_rescaled(w) for w in ws] for e, ws in explainers.items()}
    keys = [(e, r, s) for e in maps for r in active for s in strategies]

    def job(key):
        e, r, s = key
        return drop_curve(fitted[r], test, maps[e], s, fractions, stats, seed, r, e)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        curves = list(pool.map(job, keys))
    report = aggregate_and_rank({(c.explainer, c.referee, c.strategy): curve_auc(c) for c in curves})
    report.referee_accuracy = clean
    report.excluded_referees = excluded
    report.curves = curves
    report.timing = {"evaluation_seconds": time.perf_counter() - t0}
    return report


def write_curves_csv(report: AmeeReport, path) -> None:
    lines = ["explainer,referee,strategy,fraction,accuracy"]
    for c in report.curves:
        lines += [f"{c.explainer},{c.referee},{c.strategy},{f!r},{a!r}"
                  for f, a in zip(c.fractions, c.accuracies)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_report_csv(report: AmeeReport, path) -> None:
    """Deterministic report; wall-clock timings go to a separate file."""
    refs = ";".join(f"{r}={a!r}" for r, a in report.referee_accuracy.items())
    lines = [f"# {REFEREE_NOTE}", f"# referee clean accuracy: {refs}"]
    if report.excluded_referees:
        lines.append(f"# excluded referees: {';'.join(report.excluded_referees)}")
    lines.append("explainer,average_auc,scaled_auc,explanation_power,rank")
    lines += [f"{e},{a!r},{s!r},{p!r},{r}" for e, a, s, p, r in report.rows()]
    Path(path).write_text("\n".join(lines) + "\n")
