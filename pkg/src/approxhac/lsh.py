"""Multi-scale Euclidean LSH with oblivious dynamic updates.

One table set per repetition; within a set, scale ``i`` uses hash width
``bucket_width * 2**i`` and ``L`` composite keys of ``K`` p-stable atoms
``floor((a.x + b) / w)``.  A query walks the scales upward and answers with
the closest candidate at the smallest scale that yields any collision,
falling back to a linear scan when nothing collides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Set

import numpy as np

from .geometry import Centroid, DimensionMismatchError, euclidean_dist, row_distances
from .nns import DuplicateIdError, EmptyStoreError, MissingIdError, NnsApproxSpec, QueryResult

DEFAULT_BUCKET_WIDTH = 4.0
COLLISION_SAMPLES = 20_000


@dataclass(frozen=True)
class LshParams:
    c: float
    beta: float
    big_delta: float
    k_ands: Optional[int] = None
    l_ors: Optional[int] = None
    repetitions: int = 1
    bucket_width: float = DEFAULT_BUCKET_WIDTH
    seed: int = 0
    kappa_k: float = 1.0
    kappa_l: float = 1.0
    max_probe: Optional[int] = None

    def __post_init__(self):
        if not self.c > 1.0:
            raise ValueError(f"c must be > 1, got {self.c}")
        if not (self.beta > 0.0 and self.big_delta > 0.0):
            raise ValueError("beta and big_delta must be positive")
        if self.k_ands is not None and self.k_ands < 1:
            raise ValueError("k_ands must be >= 1")
        if self.l_ors is not None and self.l_ors < 1:
            raise ValueError("l_ors must be >= 1")
        if self.repetitions < 1 or self.bucket_width <= 0.0:
            raise ValueError("repetitions must be >= 1 and bucket_width > 0")

    @property
    def scales(self) -> range:
        lo = math.ceil(math.log2(self.beta))
        hi = math.ceil(math.log2(self.big_delta))
        return range(lo, max(hi, lo) + 1)


def pstable_collision_probability(dist: float, width: float) -> float:
    """Closed form per-atom collision probability for Gaussian projections."""
    if dist == 0.0:
        return 1.0
    t = width / dist
    phi = 0.5 * math.erfc(t / math.sqrt(2.0))
    return 1.0 - 2.0 * phi - 2.0 / (math.sqrt(2.0 * math.pi) * t) * (1.0 - math.exp(-t * t / 2.0))


def estimate_collision_probability(dist: float, width: float, dim: int, samples: int,
                                   rng: np.random.Generator) -> float:
    """Monte-Carlo collision rate of fresh atoms on random point pairs at ``dist``."""
    a = rng.standard_normal((samples, dim))
    b = rng.uniform(0.0, width, samples)
    u = rng.standard_normal((samples, dim))
    direction = rng.standard_normal((samples, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    v = u + dist * direction
    hu = np.floor(((a * u).sum(axis=1) + b) / width)
    hv = np.floor(((a * v).sum(axis=1) + b) / width)
    return float(np.mean(hu == hv))


@lru_cache(maxsize=64)
def _far_collision_rate(c: float, bucket_width: float) -> float:
    # scale-free: distance c at width bucket_width; fixed stream keeps builds reproducible
    rng = np.random.default_rng(0x5EED)
    p2 = estimate_collision_probability(c, bucket_width, 2, COLLISION_SAMPLES, rng)
    return min(max(p2, 1e-6), 1.0 - 1e-6)


def default_k_l(n: int, params: LshParams):
    """``(K, L)`` from the "L ors of K ands" sizing with exposed constants."""
    n = max(n, 2)
    log_n = math.log(n)
    L = params.l_ors or max(1, math.ceil(n ** (1.0 / params.c ** 2) * params.kappa_l * log_n))
    if params.k_ands:
        return params.k_ands, L
    p2 = _far_collision_rate(params.c, params.bucket_width)
    loglog = math.log(max(math.log(params.big_delta / params.beta), 1.0))
    K = max(1, math.ceil((params.kappa_k * log_n + math.log(L) + loglog) / math.log(1.0 / p2)))
    return K, L


class LshNns:
    """Oblivious dynamic (O(c), beta)-approximate NNS.

    Hash atoms are drawn once in the constructor and never resampled.
    """

    def __init__(self, params: LshParams, dim: int, expected_size: Optional[int] = None):
        self.params = params
        self.dim = dim
        self.k, self.l = default_k_l(expected_size or 2, params)
        self.scales = list(params.scales)
        self.max_probe = params.max_probe or 64 * self.l
        rng = np.random.default_rng(params.seed)
        g, s, l, k = params.repetitions, len(self.scales), self.l, self.k
        self._shape = (g, s, l, k)
        self._atoms = rng.standard_normal((g * s * l * k, dim))
        widths = params.bucket_width * np.exp2(np.array(self.scales, dtype=np.float64))
        self._widths = np.broadcast_to(widths[None, :, None, None], self._shape).reshape(-1)
        self._offsets = rng.uniform(0.0, 1.0, g * s * l * k) * self._widths
        # tables[rep][scale_index][table] : key -> set of ids
        self._tables: List[List[List[Dict[bytes, Set[int]]]]] = [
            [[{} for _ in range(l)] for _ in range(s)] for _ in range(g)
        ]
        self._items: Dict[int, Centroid] = {}
        self._keys: Dict[int, np.ndarray] = {}
        self.bucket_touches = 0
        self.fallbacks = 0

    @property
    def spec(self) -> NnsApproxSpec:
        return NnsApproxSpec(self.params.c, self.params.beta)

    @property
    def seed(self) -> int:
        return self.params.seed

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, cid: int) -> bool:
        return cid in self._items

    def ids(self):
        return list(self._items)

    def get(self, cid: int) -> Centroid:
        return self._items[cid]

    def hash(self, u: np.ndarray) -> np.ndarray:
        """Composite keys of ``u``, shape ``(reps, scales, L, K)``."""
        if u.shape != (self.dim,):
            raise DimensionMismatchError(f"expected dimension {self.dim}, got {u.shape}")
        h = np.floor((self._atoms @ u + self._offsets) / self._widths)
        return h.astype(np.int64).reshape(self._shape)

    def _hash_many(self, X: np.ndarray) -> np.ndarray:
        h = np.floor((X @ self._atoms.T + self._offsets) / self._widths)
        return h.astype(np.int64).reshape((X.shape[0],) + self._shape)

    def _place(self, c: Centroid, keys: np.ndarray) -> None:
        g, s, l, _ = self._shape
        for r in range(g):
            for si in range(s):
                tables = self._tables[r][si]
                for t in range(l):
                    tables[t].setdefault(keys[r, si, t].tobytes(), set()).add(c.id)
        self.bucket_touches += g * s * l
        self._items[c.id] = c
        self._keys[c.id] = keys

    def insert(self, c: Centroid) -> None:
        if c.id in self._items:
            raise DuplicateIdError(f"id {c.id} already present")
        self._place(c, self.hash(c.coords))

    def insert_many(self, points: Iterable[Centroid]) -> None:
        points = list(points)
        if not points:
            return
        seen = set()
        for c in points:
            if c.id in self._items or c.id in seen:
                raise DuplicateIdError(f"id {c.id} already present")
            seen.add(c.id)
        keys = self._hash_many(np.stack([c.coords for c in points]))
        for c, k in zip(points, keys):
            self._place(c, k)

    def delete(self, cid: int) -> None:
        keys = self._keys.pop(cid, None)
        if keys is None:
            raise MissingIdError(f"id {cid} not present")
        del self._items[cid]
        g, s, l, _ = self._shape
        for r in range(g):
            for si in range(s):
                tables = self._tables[r][si]
                for t in range(l):
                    key = keys[r, si, t].tobytes()
                    bucket = tables[t][key]
                    bucket.discard(cid)
                    if not bucket:
                        del tables[t][key]

    def bucket_occupancy(self) -> np.ndarray:
        """Number of non-empty buckets per ``(rep, scale, table)``."""
        g, s, l, _ = self._shape
        return np.array([[[len(self._tables[r][si][t]) for t in range(l)]
                          for si in range(s)] for r in range(g)])

    def _closest(self, u: np.ndarray, ids) -> QueryResult:
        ids = sorted(ids)
        coords = np.stack([self._items[i].coords for i in ids])
        dist = row_distances(coords, u)
        j = int(np.argmin(dist))  # first minimum == smallest id
        best = self._items[ids[j]]
        return QueryResult(best, euclidean_dist(u, best.coords))

    def collision_scale(self, u: np.ndarray, excluded: Optional[int] = None):
        """Per repetition: (scale index, candidate ids) at the first colliding scale."""
        keys = self.hash(u)
        g, s, l, _ = self._shape
        found = []
        for r in range(g):
            for si in range(s):
                tables = self._tables[r][si]
                cand: Set[int] = set()
                for t in range(l):
                    bucket = tables[t].get(keys[r, si, t].tobytes())
                    if bucket:
                        cand.update(bucket)
                        if len(cand) > self.max_probe:
                            break
                cand.discard(excluded)
                if cand:
                    if len(cand) > self.max_probe:
                        cand = set(sorted(cand)[: self.max_probe])
                    found.append((si, cand))
                    break
        return found

    def query(self, u: np.ndarray, excluded: Optional[int] = None) -> QueryResult:
        if len(self._items) - (excluded in self._items) <= 0:
            raise EmptyStoreError("no candidate besides the excluded id")
        found = self.collision_scale(u, excluded)
        if not found:
            self.fallbacks += 1
            return self._closest(u, [i for i in self._items if i != excluded])
        cand: Set[int] = set()
        for _, ids in found:
            cand |= ids
        return self._closest(u, cand)


def lsh_build(points: Iterable[Centroid], params: LshParams, dim: Optional[int] = None) -> LshNns:
    points = list(points)
    if dim is None:
        if not points:
            raise ValueError("dimension required to build an empty structure")
        dim = points[0].dim
    nns = LshNns(params, dim, expected_size=len(points))
    nns.insert_many(points)
    return nns


def with_seed(params: LshParams, seed: int) -> LshParams:
    return replace(params, seed=seed)
