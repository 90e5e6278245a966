"""Points, weighted centroids, the Euclidean kernel and the dendrogram record."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

BOUND_EXACT_THRESHOLD = 10_000


class DimensionMismatchError(ValueError):
    pass


class DuplicatePointsError(ValueError):
    """Raised when the minimum pairwise distance of a point set is zero."""


def as_point(coords) -> np.ndarray:
    p = np.asarray(coords, dtype=np.float64)
    if p.ndim != 1 or p.shape[0] < 1:
        raise ValueError(f"a point must be a non-empty vector, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("point coordinates must be finite")
    return p


def as_dataset(points) -> np.ndarray:
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError(f"dataset must be an (n, d) array with d >= 1, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        bad = int(np.argwhere(~np.isfinite(X))[0, 0])
        raise ValueError(f"non-finite coordinate in row {bad}")
    return X


def euclidean_dist(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance between two points.

    Uses the same reduction as :func:`row_distances` so that a single pair and
    a batch scan agree bit for bit.
    """
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(_norm_rows((a - b)[None, :])[0])


def row_distances(X: np.ndarray, u: np.ndarray) -> np.ndarray:
    if X.shape[1] != u.shape[0]:
        raise DimensionMismatchError(f"dimension mismatch: {X.shape[1]} vs {u.shape[0]}")
    return _norm_rows(X - u)


def _norm_rows(diff: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", under="ignore"):
        out = np.sqrt((diff * diff).sum(axis=1))
    # squares can underflow to 0 or overflow to inf; rescale just those rows
    bad = ((out == 0.0) | np.isinf(out)) & np.isfinite(diff).all(axis=1)
    if bad.any():
        rows = diff[bad]
        m = np.abs(rows).max(axis=1)
        nz = m > 0.0
        fixed = np.zeros(rows.shape[0])
        r = rows[nz] / m[nz, None]
        fixed[nz] = m[nz] * np.sqrt((r * r).sum(axis=1))
        out[bad] = fixed
    return out


def canonical_key(coords: np.ndarray) -> bytes:
    # -0.0 + 0.0 == +0.0, so signed zeros collapse to one key
    return (np.asarray(coords, dtype=np.float64) + 0.0).tobytes()


@dataclass(frozen=True, eq=False)
class Centroid:
    coords: np.ndarray
    weight: int
    id: int

    def __post_init__(self):
        if self.weight < 1:
            raise ValueError(f"centroid weight must be >= 1, got {self.weight}")

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    def __repr__(self) -> str:
        return f"Centroid(id={self.id}, weight={self.weight}, coords={self.coords.tolist()})"


def merge_centroids(x: Centroid, y: Centroid, new_id: int) -> Centroid:
    """Weighted mean of two centroids; the weight is the total point count."""
    if x.id == y.id:
        raise ValueError(f"cannot merge centroid {x.id} with itself")
    if x.coords.shape != y.coords.shape:
        raise DimensionMismatchError(f"dimension mismatch: {x.coords.shape} vs {y.coords.shape}")
    w = x.weight + y.weight
    coords = (x.weight * x.coords + y.weight * y.coords) / w
    return Centroid(coords, w, new_id)


class MergeRecord(NamedTuple):
    left_id: int
    right_id: int
    new_id: int
    distance: float
    new_size: int


@dataclass
class Dendrogram:
    """Ordered merge log over leaves ``0..n_leaves-1``.

    Merge ``k`` creates node ``n_leaves + k``.
    """

    n_leaves: int
    merges: List[MergeRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.merges)

    @property
    def complete(self) -> bool:
        return len(self.merges) == self.n_leaves - 1

    def append(self, left_id: int, right_id: int, distance: float, new_size: int) -> int:
        new_id = self.n_leaves + len(self.merges)
        self.merges.append(MergeRecord(left_id, right_id, new_id, float(distance), new_size))
        return new_id

    def sizes(self) -> np.ndarray:
        sizes = np.ones(self.n_leaves + len(self.merges), dtype=np.int64)
        for m in self.merges:
            sizes[m.new_id] = m.new_size
        return sizes

    def parents(self) -> np.ndarray:
        """Parent node id for every node; -1 for roots."""
        parent = np.full(self.n_leaves + len(self.merges), -1, dtype=np.int64)
        for m in self.merges:
            parent[m.left_id] = m.new_id
            parent[m.right_id] = m.new_id
        return parent

    def distances(self) -> np.ndarray:
        return np.array([m.distance for m in self.merges], dtype=np.float64)

    def validate(self) -> None:
        n = self.n_leaves
        size = {i: 1 for i in range(n)}
        used = set()
        for k, m in enumerate(self.merges):
            if m.new_id != n + k:
                raise ValueError(f"merge {k}: new_id {m.new_id} != {n + k}")
            for child in (m.left_id, m.right_id):
                if child not in size:
                    raise ValueError(f"merge {k}: child {child} does not exist yet")
                if child in used:
                    raise ValueError(f"merge {k}: child {child} already merged")
                used.add(child)
            if m.left_id == m.right_id:
                raise ValueError(f"merge {k}: self merge of {m.left_id}")
            if not (m.distance >= 0.0 and math.isfinite(m.distance)):
                raise ValueError(f"merge {k}: bad distance {m.distance}")
            if m.new_size != size[m.left_id] + size[m.right_id]:
                raise ValueError(f"merge {k}: size {m.new_size} != children total")
            size[m.new_id] = m.new_size
        if len(self.merges) > max(n - 1, 0):
            raise ValueError("too many merges")

    def to_linkage(self) -> np.ndarray:
        """Linkage-matrix view ``[left, right, distance, size]`` as used by scipy."""
        return np.array(
            [[m.left_id, m.right_id, m.distance, m.new_size] for m in self.merges],
            dtype=np.float64,
        ).reshape(-1, 4)


@dataclass(frozen=True)
class DistanceBounds:
    delta: float
    big_delta: float

    def __post_init__(self):
        if not (0.0 < self.delta <= self.big_delta) or not math.isfinite(self.big_delta):
            raise ValueError(f"need 0 < delta <= big_delta, got {self.delta}, {self.big_delta}")

    @property
    def aspect_ratio(self) -> float:
        return self.big_delta / self.delta


def _min_max_pairwise(X: np.ndarray, block: int = 256):
    n = X.shape[0]
    lo, hi = math.inf, 0.0
    for start in range(0, n - 1, block):
        stop = min(start + block, n)
        D = cdist(X[start:stop], X[start + 1:])
        # row r is point start + r, column c is point start + 1 + c; keep c >= r
        D = D[np.triu_indices(D.shape[0], 0, D.shape[1])]
        lo = min(lo, float(D.min()))
        hi = max(hi, float(D.max()))
    return lo, hi


def compute_bounds(points, delta: Optional[float] = None,
                   exact_threshold: int = BOUND_EXACT_THRESHOLD) -> DistanceBounds:
    """Lower/upper bounds on the pairwise distances of ``points``.

    Exact O(n^2) scan up to ``exact_threshold`` points; above it the bounding
    box diagonal stands in for the maximum and ``delta`` must be supplied.
    """
    X = as_dataset(points)
    n = X.shape[0]
    if n < 2:
        raise ValueError("compute_bounds needs at least two points")
    if n <= exact_threshold:
        lo, hi = _min_max_pairwise(X)
        if lo == 0.0:
            raise DuplicatePointsError("dataset contains duplicate points (minimum distance 0)")
        if delta is not None:
            if delta > lo:
                raise ValueError(f"supplied delta {delta} exceeds the minimum pairwise distance {lo}")
            lo = delta
        return DistanceBounds(lo, hi)
    if delta is None:
        raise ValueError(f"n={n} exceeds the exact threshold; delta must be supplied")
    diag = float(np.linalg.norm(X.max(axis=0) - X.min(axis=0)))
    return DistanceBounds(delta, max(diag, delta))


@dataclass
class Deduplicated:
    points: np.ndarray          # unique rows, in order of first appearance
    weights: np.ndarray         # multiplicity per unique row
    groups: List[List[int]]     # original row indices per unique row


def deduplicate(points) -> Deduplicated:
    X = as_dataset(points) + 0.0
    seen = {}
    groups: List[List[int]] = []
    for i, row in enumerate(X):
        key = row.tobytes()
        g = seen.get(key)
        if g is None:
            seen[key] = len(groups)
            groups.append([i])
        else:
            groups[g].append(i)
    first = [g[0] for g in groups]
    return Deduplicated(X[first].copy(), np.array([len(g) for g in groups], dtype=np.int64), groups)


def mean_of(points: Iterable[np.ndarray]) -> np.ndarray:
    pts = np.asarray(list(points), dtype=np.float64)
    return pts.sum(axis=0) / pts.shape[0]


def dendrogram_from_sequence(n_leaves: int, pairs: Sequence[tuple]) -> Dendrogram:
    """Build a dendrogram from ``(left, right, distance)`` triples, sizes inferred."""
    dend = Dendrogram(n_leaves)
    sizes = {i: 1 for i in range(n_leaves)}
    for left, right, dist in pairs:
        s = sizes[left] + sizes[right]
        new_id = dend.append(left, right, dist, s)
        sizes[new_id] = s
    return dend
