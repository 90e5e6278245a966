"""Dynamic nearest-neighbor search contract and the exact flat-scan backend.

Every backend exposes ``insert(centroid)``, ``delete(id)``,
``query(point, excluded) -> QueryResult``, ``len()`` and ``spec``.  The
``excluded`` argument is an id, not coordinates, so a centroid can exclude
itself even when another live centroid shares its coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np

from .geometry import Centroid, DimensionMismatchError, euclidean_dist, row_distances


class NnsError(Exception):
    pass


class EmptyStoreError(NnsError, LookupError):
    """No live candidate besides the excluded id."""


class DuplicateIdError(NnsError, KeyError):
    pass


class MissingIdError(NnsError, KeyError):
    pass


@dataclass(frozen=True)
class NnsApproxSpec:
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.alpha < 1.0 or self.beta < 0.0:
            raise ValueError(f"need alpha >= 1 and beta >= 0, got ({self.alpha}, {self.beta})")

    def admits(self, distance: float, best: float) -> bool:
        return distance <= self.alpha * best + self.beta


@dataclass(frozen=True)
class QueryResult:
    neighbor: Centroid
    distance: float


class ExactNns:
    """Brute-force backend: a flat coordinate array scanned on every query.

    Doubles as the correctness oracle, so it stays deliberately simple.
    Ties are broken by the smallest id.
    """

    spec = NnsApproxSpec(1.0, 0.0)

    def __init__(self, dim: Optional[int] = None, points: Iterable[Centroid] = ()):
        self._dim = dim
        self._coords = np.empty((0, dim or 0))
        self._ids = np.empty(0, dtype=np.int64)
        self._slot: Dict[int, int] = {}
        self._items: Dict[int, Centroid] = {}
        self._free = []
        for c in points:
            self.insert(c)

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, cid: int) -> bool:
        return cid in self._items

    def ids(self):
        return list(self._items)

    def get(self, cid: int) -> Centroid:
        return self._items[cid]

    def _grow(self, dim: int):
        cap = max(8, 2 * self._coords.shape[0])
        coords = np.full((cap, dim), np.inf)
        coords[: self._coords.shape[0]] = self._coords
        ids = np.full(cap, -1, dtype=np.int64)
        ids[: self._ids.shape[0]] = self._ids
        self._free.extend(range(cap - 1, self._coords.shape[0] - 1, -1))
        self._coords, self._ids = coords, ids

    def insert(self, c: Centroid) -> None:
        if c.id in self._items:
            raise DuplicateIdError(f"id {c.id} already present")
        if self._dim is None:
            self._dim = c.dim
            self._coords = np.empty((0, c.dim))
        elif c.dim != self._dim:
            raise DimensionMismatchError(f"expected dimension {self._dim}, got {c.dim}")
        if not self._free:
            self._grow(self._dim)
        slot = self._free.pop()
        self._coords[slot] = c.coords
        self._ids[slot] = c.id
        self._slot[c.id] = slot
        self._items[c.id] = c

    def delete(self, cid: int) -> None:
        slot = self._slot.pop(cid, None)
        if slot is None:
            raise MissingIdError(f"id {cid} not present")
        del self._items[cid]
        self._coords[slot] = np.inf
        self._ids[slot] = -1
        self._free.append(slot)

    def query(self, u: np.ndarray, excluded: Optional[int] = None) -> QueryResult:
        if len(self._items) - (excluded in self._items) <= 0:
            raise EmptyStoreError("no candidate besides the excluded id")
        dist = row_distances(self._coords, u)
        dist[self._ids < 0] = np.inf
        if excluded is not None and excluded in self._slot:
            dist[self._slot[excluded]] = np.inf
        best = dist.min()
        slots = np.flatnonzero(dist == best)
        slot = slots[np.argmin(self._ids[slots])] if slots.size > 1 else slots[0]
        neighbor = self._items[int(self._ids[slot])]
        return QueryResult(neighbor, euclidean_dist(u, neighbor.coords))
