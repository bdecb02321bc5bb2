"""Text formats for datasets (MTS-CSV) and saliency maps (salcsv).

Values are written with ``repr(float)`` which is the shortest string that
round-trips exactly, so reading back a written file is bitwise lossless.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError
from .tsdata import LabeledDataset, SaliencyMap, Scale

_DATASET_HEADER = re.compile(r"^mtscsv,v1,d=(\d+),L=(\d+),n=(\d+),classes=(\d+)$")
_SALIENCY_HEADER = re.compile(r"^salcsv,v1,d=(\d+),S=(\d+),scale=(raw|0to100)$")


def _fmt_row(row) -> str:
    return ",".join(repr(float(v)) for v in row)


def _write_text(path, lines):
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _parse_row(text: str, lineno: int, width: int) -> list[float]:
    tokens = text.split(",")
    if len(tokens) != width:
        raise DimensionMismatch(f"line {lineno}: expected {width} values, found {len(tokens)}")
    try:
        row = [float(t) for t in tokens]
    except ValueError:
        bad = next(t for t in tokens if not _is_float(t))
        raise ParseError(f"malformed number {bad!r}", line=lineno) from None
    if not all(np.isfinite(row)):
        raise ParseError("non-finite value", line=lineno)
    return row


def _is_float(t: str) -> bool:
    try:
        float(t)
    except ValueError:
        return False
    return True


def write_dataset(ds: LabeledDataset, path) -> None:
    n, d, L = ds.X.shape
    lines = [f"mtscsv,v1,d={d},L={L},n={n},classes={ds.n_classes}"]
    for x, label in zip(ds.X, ds.y):
        lines.append(f"label,{int(label)}")
        lines.extend(_fmt_row(row) for row in x)
    _write_text(path, lines)


def read_dataset(path, name: str | None = None, seed: int = 0) -> LabeledDataset:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", line=1)
    m = _DATASET_HEADER.match(lines[0].strip())
    if not m:
        raise ParseError(f"bad header {lines[0]!r}", line=1)
    d, L, n, n_classes = (int(g) for g in m.groups())
    block = d + 1
    if len(lines) - 1 != n * block:
        found = (len(lines) - 1) / block
        raise DimensionMismatch(
            f"header declares n={n} instances of d={d} channels, file holds {found:g}")
    X = np.empty((n, d, L))
    y = np.empty(n, dtype=np.int64)
    for i in range(n):
        head = 1 + i * block
        lab = lines[head].split(",")
        if len(lab) != 2 or lab[0] != "label":
            raise ParseError(f"expected 'label,<int>', got {lines[head]!r}", line=head + 1)
        try:
            y[i] = int(lab[1])
        except ValueError:
            raise ParseError(f"bad label {lab[1]!r}", line=head + 1) from None
        if not 0 <= y[i] < n_classes:
            raise ParseError(f"label {y[i]} outside [0, {n_classes})", line=head + 1)
        for c in range(d):
            X[i, c] = _parse_row(lines[head + 1 + c], head + 2 + c, L)
    return LabeledDataset(X, y, n_classes, seed, name if name is not None else Path(path).stem)


def write_saliency(w: SaliencyMap, path) -> None:
    d, S = w.weights.shape
    lines = [f"salcsv,v1,d={d},S={S},scale={w.scale.value}"]
    lines.extend(_fmt_row(row) for row in w.weights)
    _write_text(path, lines)


def read_saliency(path, segment_width: int = 1) -> SaliencyMap:
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", line=1)
    m = _SALIENCY_HEADER.match(lines[0].strip())
    if not m:
        raise ParseError(f"bad header {lines[0]!r}", line=1)
    d, S = int(m.group(1)), int(m.group(2))
    if len(lines) - 1 != d:
        raise DimensionMismatch(f"header declares d={d} rows, file holds {len(lines) - 1}")
    W = np.array([_parse_row(lines[1 + c], 2 + c, S) for c in range(d)]).reshape(d, S)
    return SaliencyMap(W, Scale(m.group(3)), segment_width)


def write_saliency_set(maps, directory) -> list[Path]:
    """One salcsv file per instance, named by zero-padded instance index."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, w in enumerate(maps):
        p = directory / f"{i:05d}.salcsv"
        write_saliency(w, p)
        paths.append(p)
    return paths


def read_saliency_set(directory, segment_width: int = 1) -> list[SaliencyMap]:
    paths = sorted(Path(directory).glob("*.salcsv"))
    return [read_saliency(p, segment_width) for p in paths]
