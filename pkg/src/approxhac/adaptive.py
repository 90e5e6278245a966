"""Adaptive-update-safe dynamic ANNS built from an oblivious one.

Queries are snapped to an implicit grid (the covering net) before they reach
any level, and levels are only ever built from scratch with fresh randomness,
so no level's randomness can be correlated with the points it indexes or the
queries it sees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .geometry import Centroid, DimensionMismatchError, euclidean_dist
from .nns import DuplicateIdError, EmptyStoreError, ExactNns, MissingIdError, NnsApproxSpec, QueryResult


class CapacityError(RuntimeError):
    pass


class CoveringNet:
    """Grid ``center + spacing * y`` (``y`` integer) with ``spacing = beta / sqrt(d)``.

    The grid is never materialised; :meth:`snap` rounds each coordinate down
    to the grid, which keeps every point within ``beta`` of its image.
    Points outside the cube of half-width ``radius`` around the center are
    clamped onto it first and counted in ``clamped``.
    """

    def __init__(self, center, radius: float, beta: float):
        self.center = np.asarray(center, dtype=np.float64)
        if self.center.ndim != 1:
            raise ValueError("center must be a vector")
        if not (radius > 0.0 and beta > 0.0):
            raise ValueError("radius and beta must be positive")
        self.radius = float(radius)
        self.beta = float(beta)
        self.spacing = self.beta / math.sqrt(self.center.shape[0])
        self.clamped = 0

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def snap(self, u) -> np.ndarray:
        """Net point for ``u``; also accepts an ``(m, d)`` batch of points."""
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-1:] != self.center.shape or u.ndim > 2:
            raise DimensionMismatchError(f"expected dimension {self.dim}, got {u.shape}")
        lo, hi = self.center - self.radius, self.center + self.radius
        outside = np.any((u < lo) | (u > hi), axis=-1)
        if np.any(outside):
            self.clamped += int(np.sum(outside))
            u = np.clip(u, lo, hi)
        s, g = self.center, self.spacing
        k = np.floor((u - s) / g)
        # k is the largest integer with fl(s + k*g) <= u, which makes snap idempotent
        k = np.where(s + k * g > u, k - 1, k)
        k = np.where(s + (k + 1) * g <= u, k + 1, k)
        return s + k * g


def hac_query_beta(c: float, lam: float, delta: float) -> float:
    """Additive slack under which a ``(c/lam, beta)`` ANNS acts as a pure
    ``c``-approximate one for every query the HAC engine issues."""
    if not (1.0 < lam < c):
        raise ValueError(f"need 1 < lambda < c, got lambda={lam}, c={c}")
    if not delta > 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    return delta * (lam - 1.0) / ((1.0 + c) * lam)


LevelFactory = Callable[[List[Centroid], int], object]


def exact_level_factory(dim: int) -> LevelFactory:
    def build(points: List[Centroid], seed: int):
        return ExactNns(dim, points)
    return build


@dataclass
class _Level:
    ids: set
    nns: object
    seed: int


class AdaptiveNns:
    """Merge-and-reduce partition ``S_0, S_1, ...`` with ``|S_i| <= 2**i``.

    ``level_factory(points, seed)`` builds the oblivious structure for one
    level.  Levels are rebuilt only when a cascade moves points into them.
    """

    def __init__(self, net: CoveringNet, capacity: int, level_factory: LevelFactory,
                 level_spec: NnsApproxSpec = NnsApproxSpec(), seed: int = 0,
                 check_invariants: bool = False):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.net = net
        self.capacity = capacity
        self.n_levels = math.ceil(math.log2(capacity)) + 1 if capacity > 1 else 1
        self._factory = level_factory
        self._seeds = np.random.SeedSequence(seed)
        self.level_spec = level_spec
        self.check_invariants = check_invariants
        self.levels: List[_Level] = [_Level(set(), level_factory([], self._fresh_seed()), -1)
                                     for _ in range(self.n_levels)]
        for lvl in self.levels:
            lvl.seed = getattr(lvl.nns, "seed", lvl.seed)
        self._where: Dict[int, int] = {}
        self._items: Dict[int, Centroid] = {}
        self.movements = 0
        self.rebuilds = 0

    def _fresh_seed(self) -> int:
        return int(self._seeds.spawn(1)[0].generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))

    @property
    def spec(self) -> NnsApproxSpec:
        """Contract of the wrapper given the level contract ``(c, b)``.

        ``D(u, v) <= D(u, u') + D(u', v) <= c D(u, S) + (1 + c) beta_net + b``.
        """
        c, b = self.level_spec.alpha, self.level_spec.beta
        return NnsApproxSpec(c, (1.0 + c) * self.net.beta + b)

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, cid: int) -> bool:
        return cid in self._items

    def ids(self):
        return list(self._items)

    def get(self, cid: int) -> Centroid:
        return self._items[cid]

    def level_sizes(self) -> List[int]:
        return [len(l.ids) for l in self.levels]

    def level_of(self, cid: int) -> int:
        return self._where[cid]

    def _rebuild(self, i: int) -> None:
        lvl = self.levels[i]
        seed = self._fresh_seed()
        lvl.nns = self._factory([self._items[j] for j in sorted(lvl.ids)], seed)
        lvl.seed = getattr(lvl.nns, "seed", seed)
        self.rebuilds += 1

    def insert(self, c: Centroid) -> None:
        if c.id in self._items:
            raise DuplicateIdError(f"id {c.id} already present")
        if c.dim != self.net.dim:
            raise DimensionMismatchError(f"expected dimension {self.net.dim}, got {c.dim}")
        if len(self._items) + 1 > self.capacity:
            raise CapacityError(f"capacity {self.capacity} exceeded")
        self._items[c.id] = c
        self.levels[0].ids.add(c.id)
        self._where[c.id] = 0
        self.movements += 1
        dirty = {0}
        i = 0
        while i < self.n_levels:
            lvl = self.levels[i]
            if len(lvl.ids) > 2 ** i:
                if i + 1 >= self.n_levels:
                    raise CapacityError(f"level {i} overflow")
                nxt = self.levels[i + 1]
                for j in lvl.ids:
                    self._where[j] = i + 1
                self.movements += len(lvl.ids)
                nxt.ids |= lvl.ids
                lvl.ids = set()
                dirty.update((i, i + 1))
                i += 1
            else:
                break
        for i in sorted(dirty):
            self._rebuild(i)
        if self.check_invariants:
            self.assert_invariants()

    def delete(self, cid: int) -> None:
        i = self._where.pop(cid, None)
        if i is None:
            raise MissingIdError(f"id {cid} not present")
        del self._items[cid]
        self.levels[i].ids.discard(cid)
        self.levels[i].nns.delete(cid)
        if self.check_invariants:
            self.assert_invariants()

    def query(self, u: np.ndarray, excluded: Optional[int] = None) -> QueryResult:
        if len(self._items) - (excluded in self._items) <= 0:
            raise EmptyStoreError("no candidate besides the excluded id")
        snapped = self.net.snap(u)
        best = None
        best_key = None
        for lvl in self.levels:
            live = len(lvl.ids) - (excluded in lvl.ids)
            if live <= 0:
                continue
            r = lvl.nns.query(snapped, excluded)
            key = (euclidean_dist(snapped, r.neighbor.coords), r.neighbor.id)
            if best_key is None or key < best_key:
                best, best_key = r.neighbor, key
        return QueryResult(best, euclidean_dist(u, best.coords))

    def assert_invariants(self) -> None:
        union = set()
        for i, lvl in enumerate(self.levels):
            assert len(lvl.ids) <= 2 ** i, f"|S_{i}| = {len(lvl.ids)} > {2 ** i}"
            assert not (union & lvl.ids), f"level {i} overlaps a lower level"
            union |= lvl.ids
            assert set(lvl.nns.ids()) == lvl.ids, f"N_{i} does not index exactly S_{i}"
        assert union == set(self._items), "levels do not partition the live set"


def bounding_box_net(points: np.ndarray, radius: float, beta: float) -> CoveringNet:
    lo, hi = points.min(axis=0), points.max(axis=0)
    return CoveringNet((lo + hi) / 2.0, radius, beta)
