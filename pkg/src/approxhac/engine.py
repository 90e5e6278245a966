"""Approximate centroid-linkage HAC driven by a dynamic NNS backend.

The heap engine keeps one queue entry ``(l, x, y)`` per active centroid ``x``
and repairs entries lazily: an entry whose target ``y`` has been merged away
triggers a fresh query for ``x`` when it is dequeued, and ``x`` merges with
the new neighbor if it is within ``(1 + eps) * l``.

The bucket engine is the round-based baseline: thresholds grow by ``1 + eps``
and every centroid whose neighbor lies within the threshold is merged, with a
freshly merged centroid re-checked until its neighbor leaves the threshold.
"""

from __future__ import annotations

import heapq
import logging
import math
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import pdist

from .adaptive import AdaptiveNns, bounding_box_net, hac_query_beta
from .geometry import (
    Centroid,
    Dendrogram,
    DistanceBounds,
    as_dataset,
    canonical_key,
    compute_bounds,
    deduplicate,
    euclidean_dist,
    merge_centroids,
)
from .lsh import DEFAULT_BUCKET_WIDTH, LshParams, lsh_build, with_seed
from .nns import ExactNns, NnsApproxSpec

log = logging.getLogger(__name__)

MODES = ("exact", "heap_approx", "bucket_approx")
BACKENDS = ("exact", "lsh_adaptive")


class EngineError(RuntimeError):
    pass


@dataclass(frozen=True)
class HacConfig:
    epsilon: float = 0.1
    mode: str = "heap_approx"
    nns_backend: str = "exact"
    c_target: float = 2.0
    lam: float = 1.5
    bounds: Optional[DistanceBounds] = None
    seed: int = 0
    lsh_k: Optional[int] = None
    lsh_l: Optional[int] = None
    lsh_gamma: int = 1
    bucket_width: float = DEFAULT_BUCKET_WIDTH
    debug: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.nns_backend not in BACKENDS:
            raise ValueError(f"nns_backend must be one of {BACKENDS}, got {self.nns_backend!r}")
        if not self.epsilon >= 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.c_target < 1.0:
            raise ValueError(f"c_target must be >= 1, got {self.c_target}")
        if self.mode == "bucket_approx" and self.epsilon <= 0.0:
            raise ValueError("bucket mode needs epsilon > 0 for its thresholds to grow")

    def normalized(self) -> "HacConfig":
        if self.mode == "exact":
            return replace(self, epsilon=0.0, nns_backend="exact")
        return self

    @property
    def c_hat(self) -> float:
        return self.c_target / (1.0 + self.epsilon)


@dataclass
class RunStats:
    n_points: int = 0
    n_unique: int = 0
    merges: int = 0
    dequeues: int = 0
    stale_dequeues: int = 0
    skipped_dequeues: int = 0
    requeues: int = 0
    max_requeues_per_centroid: int = 0
    nns_queries: int = 0
    nns_inserts: int = 0
    nns_deletes: int = 0
    identical_centroid_merges: int = 0
    duplicate_point_merges: int = 0
    max_close_entries: int = 0
    rounds: int = 0
    clamped_queries: int = 0
    phases: Dict[str, float] = field(default_factory=dict)

    @property
    def gamma(self) -> float:
        return self.stale_dequeues / self.merges if self.merges else 0.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["gamma"] = round(self.gamma, 6)
        return d


def requeue_cap(epsilon: float, bounds: DistanceBounds) -> float:
    """Most times one centroid can be requeued: ``ceil(log_{1+eps}(2 Delta / delta))``."""
    if epsilon <= 0.0:
        return math.inf
    return math.ceil(math.log(2.0 * bounds.big_delta / bounds.delta) / math.log1p(epsilon))


def lsh_adaptive_backend(points: np.ndarray, config: HacConfig, bounds: DistanceBounds,
                         capacity: int) -> AdaptiveNns:
    """Adaptive wrapper over LSH levels tuned so that every engine query is
    ``c_hat``-approximate.

    Levels get ``(c_hat / lam, b)`` and the net spacing is ``b`` too, with
    ``b = beta0 / (2 + c_hat / lam)`` so the wrapper's additive slack
    ``(1 + c) b + b`` equals ``beta0``.
    """
    c_hat = config.c_hat
    beta0 = hac_query_beta(c_hat, config.lam, bounds.delta)
    c_level = c_hat / config.lam
    b = beta0 / (2.0 + c_level)
    params = LshParams(
        c=c_level, beta=b, big_delta=2.0 * bounds.big_delta,
        k_ands=config.lsh_k, l_ors=config.lsh_l, repetitions=config.lsh_gamma,
        bucket_width=config.bucket_width, seed=config.seed,
    )
    dim = points.shape[1]

    def build(level_points, seed):
        return lsh_build(level_points, with_seed(params, seed), dim=dim)

    net = bounding_box_net(points, bounds.big_delta, b)
    return AdaptiveNns(net, capacity, build, level_spec=NnsApproxSpec(c_level, b),
                       seed=config.seed, check_invariants=config.debug)


MergeObserver = Callable[[Dict[int, Centroid], Centroid, Centroid, float], None]


class _Engine:
    def __init__(self, points, config: HacConfig, nns=None, on_merge: Optional[MergeObserver] = None):
        t0 = time.perf_counter()
        self.config = config.normalized()
        X = as_dataset(points)
        n = X.shape[0]
        if n < 2:
            raise ValueError("HAC needs at least two points")
        dedup = deduplicate(X)
        if dedup.points.shape[0] < 2:
            raise ValueError("HAC needs at least two distinct points")
        self.bounds = self.config.bounds or compute_bounds(dedup.points)
        self.stats = RunStats(n_points=n, n_unique=dedup.points.shape[0])
        self.dend = Dendrogram(n)
        self.on_merge = on_merge
        self.active: Dict[int, Centroid] = {}
        self.by_coords: Dict[bytes, int] = {}
        self.requeue_count: Dict[int, int] = defaultdict(int)
        self.heap: List[Tuple] = []
        self.close_entries = 0

        initial = []
        for coords, group in zip(dedup.points, dedup.groups):
            node, size = group[0], 1
            for j in group[1:]:
                size += 1
                node = self.dend.append(min(node, j), max(node, j), 0.0, size)
                self.stats.duplicate_point_merges += 1
                self.stats.merges += 1
            initial.append(Centroid(coords, size, node))

        if nns is None:
            if self.config.nns_backend == "exact":
                nns = ExactNns(X.shape[1])
            else:
                nns = lsh_adaptive_backend(dedup.points, self.config, self.bounds, len(initial))
        self.nns = nns
        for c in initial:
            self._activate(c)
        self.stats.phases["setup"] = time.perf_counter() - t0

    # bookkeeping around the backend

    def _activate(self, c: Centroid) -> None:
        self.active[c.id] = c
        self.by_coords[canonical_key(c.coords)] = c.id
        self.nns.insert(c)
        self.stats.nns_inserts += 1

    def _deactivate(self, c: Centroid) -> None:
        del self.active[c.id]
        key = canonical_key(c.coords)
        if self.by_coords.get(key) == c.id:
            del self.by_coords[key]
        self.nns.delete(c.id)
        self.stats.nns_deletes += 1

    def _query(self, c: Centroid):
        self.stats.nns_queries += 1
        r = self.nns.query(c.coords, c.id)
        return r.neighbor, euclidean_dist(c.coords, r.neighbor.coords)

    def _record(self, x: Centroid, y: Centroid, dist: float) -> Centroid:
        if self.on_merge is not None:
            self.on_merge(self.active, x, y, dist)
        new_id = self.dend.append(min(x.id, y.id), max(x.id, y.id), dist, x.weight + y.weight)
        self.stats.merges += 1
        return merge_centroids(x, y, new_id)

    def _merge(self, x: Centroid, y: Centroid) -> Centroid:
        """Merge two active centroids; absorb any active centroid the result lands on."""
        if x.id not in self.active or y.id not in self.active:
            raise EngineError(f"merge of inactive centroid ({x.id}, {y.id})")
        dist = euclidean_dist(x.coords, y.coords)
        z = self._record(x, y, dist)
        self._deactivate(x)
        self._deactivate(y)
        twin = self.by_coords.get(canonical_key(z.coords))
        while twin is not None:
            z_star = self.active[twin]
            z = self._record(z, z_star, 0.0)
            self._deactivate(z_star)
            self.stats.identical_centroid_merges += 1
            twin = self.by_coords.get(canonical_key(z.coords))
        self._activate(z)
        return z

    # heap engine

    def _push(self, l: float, x: Centroid, y: Centroid) -> None:
        heapq.heappush(self.heap, (l, min(x.id, y.id), max(x.id, y.id), x.id, y.id))
        if l < self.bounds.delta:
            self.close_entries += 1
            self.stats.max_close_entries = max(self.stats.max_close_entries, self.close_entries)
            if self.config.debug and self.config.nns_backend == "exact" and self.close_entries > 1:
                raise AssertionError("more than one queued entry below delta")

    def _handle_merge(self, x: Centroid, y: Centroid) -> None:
        z = self._merge(x, y)
        if len(self.active) > 1:
            y_star, l = self._query(z)
            self._push(l, z, y_star)

    def run_heap(self) -> None:
        t0 = time.perf_counter()
        eps = self.config.epsilon
        for cid in sorted(self.active):
            p = self.active[cid]
            y, l = self._query(p)
            self._push(l, p, y)
        self.stats.phases["seed_queue"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        while self.heap:
            l, _, _, x_id, y_id = heapq.heappop(self.heap)
            self.stats.dequeues += 1
            if l < self.bounds.delta:
                self.close_entries -= 1
            x = self.active.get(x_id)
            y = self.active.get(y_id)
            if x is not None and y is not None:
                self._handle_merge(x, y)
            elif x is None:
                self.stats.skipped_dequeues += 1
            else:
                self.stats.stale_dequeues += 1
                y_star, l_star = self._query(x)
                if l_star <= (1.0 + eps) * l:
                    self._handle_merge(x, y_star)
                else:
                    self.requeue_count[x_id] += 1
                    self.stats.requeues += 1
                    self._push(l_star, x, y_star)
        self.stats.max_requeues_per_centroid = max(self.requeue_count.values(), default=0)
        self.stats.phases["merge_loop"] = time.perf_counter() - t0

    # bucket engine

    def run_bucket(self) -> None:
        t0 = time.perf_counter()
        growth = 1.0 + self.config.epsilon
        threshold = self.bounds.delta
        while len(self.active) > 1:
            self.stats.rounds += 1
            progress = True
            while progress and len(self.active) > 1:
                progress = False
                for cid in sorted(self.active):
                    x = self.active.get(cid)
                    if x is None or len(self.active) < 2:
                        continue
                    y, l = self._query(x)
                    if l > threshold:
                        continue
                    progress = True
                    z = self._merge(x, y)
                    while len(self.active) > 1:
                        y, l = self._query(z)
                        if l > threshold:
                            break
                        z = self._merge(z, y)
            threshold *= growth
        self.stats.phases["merge_loop"] = time.perf_counter() - t0

    def finish(self):
        if len(self.active) != 1 or not self.dend.complete:
            raise EngineError(f"run ended with {len(self.active)} active centroids")
        if isinstance(self.nns, AdaptiveNns):
            self.stats.clamped_queries = self.nns.net.clamped
        return self.dend, self.stats


def run_hac(points, config: HacConfig = HacConfig(), nns=None,
            on_merge: Optional[MergeObserver] = None):
    """Cluster ``points``; returns ``(Dendrogram, RunStats)``.

    ``mode="bucket_approx"`` dispatches to :func:`run_hac_bucket`.  ``nns``
    overrides the backend named in the config.
    """
    if config.mode == "bucket_approx":
        return run_hac_bucket(points, config, nns=nns, on_merge=on_merge)
    eng = _Engine(points, config, nns=nns, on_merge=on_merge)
    eng.run_heap()
    return eng.finish()


def run_hac_bucket(points, config: HacConfig = HacConfig(mode="bucket_approx"), nns=None,
                   on_merge: Optional[MergeObserver] = None):
    if config.mode != "bucket_approx":
        config = replace(config, mode="bucket_approx")
    eng = _Engine(points, config, nns=nns, on_merge=on_merge)
    eng.run_bucket()
    return eng.finish()


def exact_hac(points) -> Dendrogram:
    dend, _ = run_hac(points, HacConfig(mode="exact"))
    return dend


def closest_active_distance(active: Dict[int, Centroid]) -> float:
    """Brute-force minimum distance over all active centroid pairs."""
    coords = np.stack([c.coords for c in active.values()])
    return float(pdist(coords).min())


@dataclass
class StepOracle:
    """Merge observer recording each merge distance next to the best available one."""

    steps: List[Tuple[float, float]] = field(default_factory=list)

    def __call__(self, active, x, y, dist) -> None:
        opt = 0.0 if dist == 0.0 else closest_active_distance(active)
        self.steps.append((dist, opt))

    def ratios(self) -> np.ndarray:
        d = np.array(self.steps, dtype=np.float64).reshape(-1, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(d[:, 1] > 0, d[:, 0] / d[:, 1], np.where(d[:, 0] > 0, np.inf, 1.0))
        return r

    def violations(self, factor: float, rtol: float = 1e-12) -> int:
        return int(sum(1 for dist, opt in self.steps if dist > factor * opt * (1.0 + rtol)))


def invariant_check(points, config: HacConfig) -> dict:
    """Run with step-wise instrumentation and report every checkable invariant."""
    config = config.normalized()
    oracle = StepOracle()
    dend, stats = run_hac(points, config, on_merge=oracle)
    dend.validate()
    X = as_dataset(points)
    bounds = config.bounds or compute_bounds(deduplicate(X).points)
    factor = (1.0 + config.epsilon) * (1.0 if config.nns_backend == "exact" else config.c_hat)
    cap = requeue_cap(config.epsilon, bounds)
    ratios = oracle.ratios()
    return {
        "merges": stats.merges,
        "approx_factor": factor,
        "approx_violations": oracle.violations(factor),
        "max_ratio": float(ratios.max()) if ratios.size else 1.0,
        "requeue_cap": cap,
        "max_requeues_per_centroid": stats.max_requeues_per_centroid,
        "requeue_cap_ok": stats.max_requeues_per_centroid <= cap,
        "max_close_entries": stats.max_close_entries,
        "dendrogram_complete": dend.complete,
        "gamma": stats.gamma,
    }
