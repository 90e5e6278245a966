"""Dataset, label, dendrogram and stats serialisation."""

from __future__ import annotations

import csv
import json
import math
import os
from typing import List, Optional

import numpy as np

from .geometry import Dendrogram, MergeRecord

DENDROGRAM_HEADER = ["left_id", "right_id", "new_id", "distance", "size"]


class ParseError(ValueError):
    pass


def _parse_row(row, lineno):
    try:
        vals = [float(x) for x in row]
    except ValueError as exc:
        raise ParseError(f"row {lineno}: {exc}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError(f"row {lineno}: non-finite value")
    return vals


def _looks_numeric(row) -> bool:
    try:
        [float(x) for x in row]
    except ValueError:
        return False
    return True


def read_csv_points(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh)):
            row = [x.strip() for x in row]
            if not row or all(x == "" for x in row):
                continue
            if lineno == 0 and not _looks_numeric(row):
                continue  # header
            vals = _parse_row(row, lineno)
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(f"row {lineno}: expected {width} values, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def read_fvecs(path) -> np.ndarray:
    """Read little-endian ``[int32 d][d x float32]`` records, widened to float64."""
    raw = np.fromfile(path, dtype="<u1")
    if raw.size == 0:
        raise ParseError(f"{path}: empty file")
    if raw.size < 4:
        raise ParseError(f"{path}: truncated header")
    d = int(raw[:4].view("<i4")[0])
    if d < 1:
        raise ParseError(f"record 0: bad dimension {d}")
    rec = 4 * (d + 1)
    if raw.size % rec:
        # find the first record that breaks the layout for a useful message
        off, idx = 0, 0
        while off + 4 <= raw.size:
            di = int(raw[off:off + 4].view("<i4")[0])
            if di != d:
                raise ParseError(f"record {idx}: dimension {di} differs from {d}")
            if off + rec > raw.size:
                break
            off += rec
            idx += 1
        raise ParseError(f"record {idx}: truncated")
    words = raw.view("<i4").reshape(-1, d + 1)
    dims = words[:, 0]
    bad = np.flatnonzero(dims != d)
    if bad.size:
        raise ParseError(f"record {int(bad[0])}: dimension {int(dims[bad[0]])} differs from {d}")
    X = raw.view("<f4").reshape(-1, d + 1)[:, 1:].astype(np.float64)
    nonfinite = np.flatnonzero(~np.isfinite(X).all(axis=1))
    if nonfinite.size:
        raise ParseError(f"record {int(nonfinite[0])}: non-finite value")
    return X


def write_fvecs(path, X) -> None:
    X = np.asarray(X, dtype="<f4")
    n, d = X.shape
    out = np.empty((n, d + 1), dtype="<f4")
    out[:, 1:] = X
    out[:, 0] = np.array([d], dtype="<i4").view("<f4")[0]
    out.tofile(path)


def write_csv_points(path, X) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(X, dtype=np.float64):
            w.writerow([repr(float(v)) for v in row])


def load_points(path, fmt: Optional[str] = None) -> np.ndarray:
    """Load a dataset as an ``(n, d)`` float64 array; ``fmt`` is ``csv`` or ``fvecs``."""
    if fmt is None:
        fmt = "fvecs" if str(path).endswith(".fvecs") else "csv"
    if not os.path.exists(path):
        raise FileNotFoundError(f"input file not found: {path}")
    if fmt == "csv":
        return read_csv_points(path)
    if fmt == "fvecs":
        return read_fvecs(path)
    raise ValueError(f"unknown format {fmt!r}")


def load_labels(path) -> List[str]:
    labels = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and r[0].strip() != ""]
    for i, row in enumerate(rows):
        if i == 0 and row[0].strip().lower() in ("label", "labels", "class", "y"):
            continue
        labels.append(row[-1].strip())
    return labels


def write_dendrogram(dend: Dendrogram, path) -> None:
    with open(path, "w", newline="") as fh:
        write_dendrogram_to(dend, fh)


def write_dendrogram_to(dend: Dendrogram, fh) -> None:
    fh.write(",".join(DENDROGRAM_HEADER) + "\n")
    for m in dend.merges:
        fh.write(f"{m.left_id},{m.right_id},{m.new_id},{m.distance:.17g},{m.new_size}\n")


def read_dendrogram(path, n_leaves: Optional[int] = None) -> Dendrogram:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DENDROGRAM_HEADER:
            raise ParseError(f"{path}: bad header {header}")
        merges = []
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            try:
                left, right, new, dist, size = row
                merges.append(MergeRecord(int(left), int(right), int(new), float(dist), int(size)))
            except ValueError as exc:
                raise ParseError(f"row {lineno}: {exc}") from None
    if n_leaves is None:
        n_leaves = merges[0].new_id if merges else 1
    dend = Dendrogram(n_leaves, merges)
    dend.validate()
    return dend


def emit_stats(stats, path, extra: Optional[dict] = None) -> dict:
    payload = stats.as_dict()
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload
