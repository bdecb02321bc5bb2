"""Small convolutional network with global average pooling over the C(X)
input, trained with hand-written backprop and Adam, plus CAM and dCAM.

``C(X)`` stacks ``d`` cyclic rotations of the (permuted) channel list: row ``r``,
slot ``s`` holds channel ``perm[(s + r) % d]``. Each row is an image of shape
``(slots, time)``; two 3x3 same-padded convolutions with ReLU run over it with
weights shared across rows. Global average pooling over (row, slot, time) feeds a
dense softmax layer. Averaging over the slot axis first and pooling over
(row, time) is the same linear map, so ``cam_rows`` is the per-row CAM and its
mean is the class logit minus the intercept.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, InvalidPermutation, NonFinite, ParseError, ShapeMismatch
from .linear import softmax
from .tsdata import LabeledDataset, SaliencyMap, Scale, as_series

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wd", "bd")


# ----------------------------------------------------------------------- C(X)

def check_permutation(perm, d: int) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (d,) or not np.array_equal(np.sort(perm), np.arange(d)):
        raise InvalidPermutation(f"{perm.tolist()} is not a permutation of range({d})")
    return perm


def cx_layout(perm) -> np.ndarray:
    """``(d, d)`` table of the channel held by each (row, slot)."""
    perm = np.asarray(perm, dtype=np.int64)
    d = len(perm)
    return perm[(np.arange(d)[None, :] + np.arange(d)[:, None]) % d]


def build_cx(x, perm=None) -> np.ndarray:
    """``(d rows, d slots, L)`` tensor of cyclic rotations of the permuted channels."""
    x = as_series(x)
    d = x.shape[0]
    perm = np.arange(d) if perm is None else check_permutation(perm, d)
    return x[cx_layout(perm)]


# ------------------------------------------------------------------ conv layer

def _im2col(x: np.ndarray) -> np.ndarray:
    """``(N, H, W, C)`` -> ``(N*H*W, 9*C)`` 3x3 same-padded patches, (row, col, channel) order."""
    N, H, W, C = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((N, H, W, 3, 3, C), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            cols[:, :, :, i, j, :] = xp[:, i : i + H, j : j + W, :]
    return cols.reshape(N * H * W, 9 * C)


def _wmat(W: np.ndarray) -> np.ndarray:
    return W.transpose(0, 2, 3, 1).reshape(W.shape[0], -1)


def conv_forward(x, W, b):
    cols = _im2col(x)
    out = cols @ _wmat(W).T + b
    return out.reshape(*x.shape[:3], W.shape[0]), cols


def conv_backward(dout, cols, W, x_shape, need_dx=True):
    Cout, Cin = W.shape[:2]
    d2 = dout.reshape(-1, Cout)
    dW = (d2.T @ cols).reshape(Cout, 3, 3, Cin).transpose(0, 3, 1, 2)
    db = d2.sum(axis=0)
    if not need_dx:
        return dW, db, None
    N, H, Wd, C = x_shape
    dcols = (d2 @ _wmat(W)).reshape(N, H, Wd, 3, 3, C)
    dxp = np.zeros((N, H + 2, Wd + 2, C), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i : i + H, j : j + Wd, :] += dcols[:, :, :, i, j, :]
    return dW, db, dxp[:, 1:-1, 1:-1, :]


# ----------------------------------------------------------------------- model

@dataclass
class GapCnnModel:
    params: dict
    d: int
    L: int
    classes: int
    meta: dict = field(default_factory=dict)
    kind = "gapcnn"

    @property
    def dtype(self):
        return self.params["W1"].dtype

    @classmethod
    def init(cls, d, L, classes, filters=(16, 32), seed=0, dtype=np.float64) -> "GapCnnModel":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        f1, f2 = filters

        def uniform(shape, fan_in):
            bound = math.sqrt(6.0 / fan_in)
            return rng.uniform(-bound, bound, size=shape).astype(dtype)

        params = {
            "W1": uniform((f1, 1, 3, 3), 9),
            "b1": np.zeros(f1, dtype),
            "W2": uniform((f2, f1, 3, 3), 9 * f1),
            "b2": np.zeros(f2, dtype),
            "Wd": uniform((f2, classes), f2) / math.sqrt(6.0),
            "bd": np.zeros(classes, dtype),
        }
        return cls(params, d, L, classes, {"filters": [f1, f2], "seed": seed})

    # forward / backward ------------------------------------------------------

    def _images(self, cx: np.ndarray) -> np.ndarray:
        """``(B, d, d, L)`` C(X) batch -> ``(B*d, d, L, 1)`` images."""
        B = cx.shape[0]
        return cx.reshape(B * self.d, self.d, self.L, 1).astype(self.dtype, copy=False)

    def features(self, cx: np.ndarray):
        """Last conv activations as ``(B, rows, slots, L, filters)`` plus a backprop cache."""
        p = self.params
        img = self._images(cx)
        z1, cols1 = conv_forward(img, p["W1"], p["b1"])
        a1 = np.maximum(z1, 0)
        z2, cols2 = conv_forward(a1, p["W2"], p["b2"])
        a2 = np.maximum(z2, 0)
        B = cx.shape[0]
        cache = (img.shape, cols1, z1, a1.shape, cols2, z2)
        return a2.reshape(B, self.d, self.d, self.L, -1), cache

    def logits(self, cx: np.ndarray) -> np.ndarray:
        a2, _ = self.features(cx)
        g = a2.mean(axis=(1, 2, 3))
        return g @ self.params["Wd"] + self.params["bd"]

    def loss_and_grads(self, cx: np.ndarray, y: np.ndarray):
        """Mean cross-entropy over the batch and the gradient of every parameter."""
        p = self.params
        a2, (img_shape, cols1, z1, a1_shape, cols2, z2) = self.features(cx)
        B = cx.shape[0]
        positions = self.d * self.d * self.L
        g = a2.mean(axis=(1, 2, 3))
        logits = g @ p["Wd"] + p["bd"]
        P = softmax(logits)
        loss = -np.mean(np.log(np.clip(P[np.arange(B), y], 1e-300, None)))
        dlog = P.copy()
        dlog[np.arange(B), y] -= 1.0
        dlog /= B
        grads = {"Wd": g.T @ dlog, "bd": dlog.sum(axis=0)}
        dg = dlog @ p["Wd"].T  # (B, F2)
        dz2 = np.broadcast_to((dg / positions)[:, None, None, None, :], a2.shape)
        dz2 = dz2.reshape(z2.shape) * (z2 > 0)
        grads["W2"], grads["b2"], da1 = conv_backward(dz2, cols2, p["W2"], a1_shape)
        dz1 = da1 * (z1 > 0)
        grads["W1"], grads["b1"], _ = conv_backward(dz1, cols1, p["W1"], img_shape, need_dx=False)
        self.last_logits = logits
        return float(loss), grads

    def predict_proba(self, X, batch: int = 8) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 3 or X.shape[1:] != (self.d, self.L):
            raise ShapeMismatch(f"model expects (n, {self.d}, {self.L}), got {X.shape}")
        layout = cx_layout(np.arange(self.d))
        out = [softmax(self.logits(X[lo : lo + batch][:, layout]))
               for lo in range(0, len(X), batch)]
        return np.concatenate(out).astype(np.float64)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    # persistence -----------------------------------------------------------

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {"format_version": FORMAT_VERSION, "kind": self.kind,
                "params": {"d": self.d, "L": self.L, "classes": self.classes,
                           "dtype": np.dtype(self.dtype).name, **self.meta}}
        (directory / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        np.savez(directory / "weights.npz", **self.params)

    @classmethod
    def load(cls, directory) -> "GapCnnModel":
        directory = Path(directory)
        meta = json.loads((directory / "model.json").read_text())
        if meta.get("format_version") != FORMAT_VERSION or meta.get("kind") != cls.kind:
            raise ParseError(f"not a gapcnn v{FORMAT_VERSION} checkpoint")
        p = dict(meta["params"])
        with np.load(directory / "weights.npz") as z:
            params = {k: z[k].copy() for k in PARAM_NAMES}
        d, L, classes = p.pop("d"), p.pop("L"), p.pop("classes")
        p.pop("dtype", None)
        return cls(params, d, L, classes, p)


# ----------------------------------------------------------------------- train

@dataclass
class Adam:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for k, g in grads.items():
            m = self.m.setdefault(k, np.zeros_like(g))
            v = self.v.setdefault(k, np.zeros_like(g))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[k] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(params[k].dtype)


def train(ds: LabeledDataset, epochs: int = 200, lr: float = 1e-4, seed: int = 0,
          batch_size: int = 8, filters=(16, 32), patience: int = 20, dtype=np.float32,
          test: LabeledDataset | None = None, eval_every: int = 10,
          history: list | None = None) -> GapCnnModel:
    """Adam on mean cross-entropy over identity-permutation C(X) inputs.

    Stops early after *patience* epochs without improving the epoch-mean loss.
    Rows of *history* are ``(epoch, loss, train_acc, test_acc)``; train accuracy
    is counted on the minibatches as they are seen, test accuracy is evaluated
    every *eval_every* epochs (NaN otherwise).
    """
    if len(np.unique(ds.y)) < 2:
        raise DataError("training needs at least two classes")
    model = GapCnnModel.init(ds.d, ds.L, ds.n_classes, filters, seed, dtype)
    model.meta.update({"lr": lr, "epochs": epochs, "batch_size": batch_size})
    opt = Adam(lr=lr)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
    layout = cx_layout(np.arange(ds.d))
    best, stale = np.inf, 0
    history = [] if history is None else history
    for epoch in range(1, epochs + 1):
        order = rng.permutation(ds.n)
        total, hits = 0.0, 0
        for lo in range(0, ds.n, batch_size):
            idx = order[lo : lo + batch_size]
            loss, grads = model.loss_and_grads(ds.X[idx][:, layout], ds.y[idx])
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NonFinite(f"non-finite loss/gradient at epoch {epoch} (loss={loss}, lr={lr})")
            opt.step(model.params, grads)
            total += loss * len(idx)
            hits += int(np.sum(np.argmax(model.last_logits, axis=1) == ds.y[idx]))
        mean_loss = total / ds.n
        train_acc = hits / ds.n
        test_acc = float("nan")
        if test is not None and (epoch % eval_every == 0 or epoch == epochs):
            test_acc = float(np.mean(model.predict(test.X) == test.y))
        history.append((epoch, mean_loss, train_acc, test_acc))
        log.info("epoch %d loss %.5f train %.3f test %.3f", epoch, mean_loss, train_acc, test_acc)
        if mean_loss < best - 1e-7:
            best, stale = mean_loss, 0
        else:
            stale += 1
            if stale >= patience:
                break
    model.meta["epochs_run"] = len(history)
    return model


# ------------------------------------------------------------------- CAM / dCAM

def cam_cells(m: GapCnnModel, cx: np.ndarray, target_class: int) -> np.ndarray:
    """Class activation per (row, slot, time) for one or more C(X) tensors."""
    cx = np.asarray(cx)
    single = cx.ndim == 3
    if single:
        cx = cx[None]
    if cx.shape[1:] != (m.d, m.d, m.L):
        raise ShapeMismatch(f"model expects C(X) of shape ({m.d}, {m.d}, {m.L}), got {cx.shape[1:]}")
    a2, _ = m.features(cx)
    q = (a2 @ m.params["Wd"][:, target_class]).astype(np.float64)
    return q[0] if single else q


def cam_rows(m: GapCnnModel, cx: np.ndarray, target_class: int) -> np.ndarray:
    """``(rows, L)`` CAM with the slot axis averaged out."""
    return cam_cells(m, cx, target_class).mean(axis=-2)


@dataclass
class DcamAccumulator:
    """Sum of CAM values per (channel, position, time) over processed permutations."""

    d: int
    L: int
    total: np.ndarray = None
    count: int = 0

    def __post_init__(self):
        if self.total is None:
            self.total = np.zeros((self.d, self.d, self.L))

    def add(self, q: np.ndarray, perm) -> None:
        """*q* is ``(rows, slots, L)``; the channel in slot ``s`` sits at position ``s``."""
        layout = cx_layout(perm)
        slots = np.broadcast_to(np.arange(self.d), layout.shape)
        self.total[layout, slots] += q
        self.count += 1

    def mean(self) -> np.ndarray:
        return self.total / self.count


def dcam_permutations(d: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """All ``d!`` orders when that is at most *k*, else *k* seeded random ones."""
    if k < 1:
        raise DataError("k must be >= 1")
    if math.factorial(d) <= k:
        return [np.array(p) for p in itertools.permutations(range(d))]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return [rng.permutation(d) for _ in range(k)]


def dcam(m: GapCnnModel, x, k: int = 200, seed: int = 0, target_class: int | None = None,
         batch: int = 8) -> SaliencyMap:
    """Channel-resolved saliency ``(d, L)`` from CAMs over *k* channel orders.

    Per (channel, time) the CAM is averaged over permutations, giving a value
    per position; the position mean minus the channel's time-average is kept
    for channels whose across-position variance reaches the median channel
    variance, other channels are zeroed.
    """
    x = as_series(x)
    if x.shape != (m.d, m.L):
        raise ShapeMismatch(f"model expects ({m.d}, {m.L}), got {x.shape}")
    if target_class is None:
        target_class = int(m.predict(x[None])[0])
    if m.d == 1:
        return SaliencyMap(cam_rows(m, x[None], target_class), Scale.RAW, 1)
    perms = dcam_permutations(m.d, k, seed)
    acc = DcamAccumulator(m.d, m.L)
    for lo in range(0, len(perms), batch):
        chunk = perms[lo : lo + batch]
        q = cam_cells(m, np.stack([x[cx_layout(p)] for p in chunk]), target_class)
        for p, qi in zip(chunk, q):
            acc.add(qi, p)
    M = acc.mean()  # (channel, position, time)
    mu = M.mean(axis=1)
    var = M.var(axis=1).mean(axis=1)
    W = mu - mu.mean(axis=1, keepdims=True)
    W[var < np.median(var)] = 0.0
    return SaliencyMap(W, Scale.RAW, 1)
