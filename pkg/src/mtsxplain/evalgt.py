"""Scoring saliency maps against a binary ground-truth mask."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateMask, NotRescaled, ShapeMismatch
from .tsdata import GroundTruthMask, SaliencyMap, Scale, rescale_abs_minmax

THRESHOLD = 50.0
METRICS = ("precision", "recall", "f1", "pr_auc", "roc_auc")


@dataclass(frozen=True)
class GtMetrics:
    precision: float
    recall: float
    f1: float
    pr_auc: float
    roc_auc: float
    threshold: float = THRESHOLD
    per_instance: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRICS}


def _scores_labels(w, g):
    scores = np.asarray(w.weights if isinstance(w, SaliencyMap) else w, dtype=np.float64)
    labels = np.asarray(g.mask if isinstance(g, GroundTruthMask) else g)
    if scores.shape != labels.shape:
        raise ShapeMismatch(f"saliency shape {scores.shape} != mask shape {labels.shape}")
    return scores.reshape(-1), labels.reshape(-1).astype(bool)


def threshold_metrics(w: SaliencyMap, g: GroundTruthMask, threshold: float = THRESHOLD):
    """Precision, recall and F1 of the cells strictly above *threshold*."""
    if isinstance(w, SaliencyMap) and w.scale is not Scale.RESCALED:
        raise NotRescaled("threshold metrics need a map rescaled to [0, 100]")
    s, g = _scores_labels(w, g)
    pred = s > threshold
    tp = np.sum(pred & g)
    precision = tp / pred.sum() if pred.any() else 0.0
    recall = tp / g.sum() if g.any() else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return float(precision), float(recall), float(f1)


def _check_both(g):
    if g.all() or not g.any():
        raise DegenerateMask("AUC needs both informative and uninformative cells")


def roc_auc(w, g) -> float:
    """Mann-Whitney AUC: P(score_pos > score_neg) + 0.5 P(tie)."""
    s, g = _scores_labels(w, g)
    _check_both(g)
    ranks = rankdata(s)  # average ranks give ties half credit
    n_pos, n_neg = g.sum(), (~g).sum()
    return float((ranks[g].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def pr_auc(w, g) -> float:
    """Average precision with tied scores grouped into one threshold step."""
    s, g = _scores_labels(w, g)
    _check_both(g)
    order = np.argsort(-s, kind="stable")
    s, g = s[order], g[order]
    last = np.r_[s[1:] != s[:-1], True]  # end of each tie group
    tp = np.cumsum(g)[last]
    pp = np.flatnonzero(last) + 1
    recall_step = np.diff(np.r_[0, tp]) / g.sum()
    return float(np.sum(recall_step * tp / pp))


def instance_metrics(w: SaliencyMap, g: GroundTruthMask, threshold: float = THRESHOLD):
    if w.scale is not Scale.RESCALED:
        w = rescale_abs_minmax(w)
    p, r, f = threshold_metrics(w, g, threshold)
    return np.array([p, r, f, pr_auc(w, g), roc_auc(w, g)])


def evaluate_explainer(explanations, g: GroundTruthMask, threshold: float = THRESHOLD) -> GtMetrics:
    """Per-instance metrics, then the arithmetic mean."""
    per = np.array([instance_metrics(w, g, threshold) for w in explanations])
    mean = per.mean(axis=0)
    return GtMetrics(*map(float, mean), threshold=threshold, per_instance=per)


def random_explanations(n: int, d: int, S: int, seed: int = 0, segment_width: int = 1):
    """Baseline explainer: independent U(0, 1) maps, one stream per instance."""
    return [SaliencyMap(np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, i])))
                        .random((d, S)), Scale.RAW, segment_width) for i in range(n)]


def rank_channels(explanations) -> list[tuple[int, float]]:
    """Channel importance: mean rescaled |weight| over instances and time, max = 1."""
    maps = [w if w.scale is Scale.RESCALED else rescale_abs_minmax(w) for w in explanations]
    imp = np.mean([m.weights.mean(axis=1) for m in maps], axis=0)
    top = imp.max()
    if top > 0:
        imp = imp / top
    order = sorted(range(len(imp)), key=lambda c: (-imp[c], c))
    return [(c, float(imp[c])) for c in order]
