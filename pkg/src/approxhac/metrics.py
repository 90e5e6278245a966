"""Dendrogram quality metrics: flat cuts, ARI/NMI, purity, Dasgupta cost, inversions."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Dendrogram, as_dataset, row_distances

PURITY_EXACT_THRESHOLD = 2000
DASGUPTA_EXACT_THRESHOLD = 2000
SAMPLE_PAIRS = 1_000_000


def relabel(labels) -> np.ndarray:
    """Map arbitrary labels to contiguous ids ``0..k-1`` in order of first appearance."""
    labels = list(labels)
    index: Dict = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        out[i] = index.setdefault(lab, len(index))
    return out


@dataclass(frozen=True)
class CutPolicy:
    mode: str = "all_thresholds"
    log_base: float = 1.1

    def __post_init__(self):
        if self.mode not in ("all_thresholds", "log_thresholds"):
            raise ValueError(f"unknown cut policy {self.mode!r}")
        if not self.log_base > 1.0:
            raise ValueError("log_base must be > 1")


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra
        return ra


def flatten_at_threshold(dend: Dendrogram, tau: float, mode: str = "bottom_up") -> np.ndarray:
    """Flat clustering from the merges with cost at most ``tau``.

    ``bottom_up`` replays merges in recorded order and skips any merge above
    ``tau`` or whose children were not both formed, so a node survives only
    if its whole subtree is within ``tau``.  ``top_down`` cuts every root-leaf
    path at the first node (from the root) whose cost is at most ``tau``.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    n = dend.n_leaves
    if mode == "bottom_up":
        uf = _UnionFind(n)
        rep = {i: i for i in range(n)}
        for m in dend.merges:
            if m.distance > tau or m.left_id not in rep or m.right_id not in rep:
                continue
            rep[m.new_id] = uf.union(rep[m.left_id], rep[m.right_id])
        return relabel(uf.find(i) for i in range(n))
    if mode == "top_down":
        children = {m.new_id: (m.left_id, m.right_id) for m in dend.merges}
        cost = {m.new_id: m.distance for m in dend.merges}
        parent = dend.parents()
        labels = np.empty(n, dtype=np.int64)
        stack = [(int(r), -1) for r in np.flatnonzero(parent == -1)]
        while stack:
            node, owner = stack.pop()
            if owner < 0 and (node < n or cost[node] <= tau):
                owner = node
            if node < n:
                labels[node] = owner
            else:
                stack.extend((c, owner) for c in children[node])
        return relabel(labels)
    raise ValueError(f"unknown flatten mode {mode!r}")


def _contingency(a, b) -> np.ndarray:
    a, b = relabel(a), relabel(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    table = np.zeros((a.max(initial=-1) + 1, b.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (a, b), 1)
    return table


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def ari(a, b) -> float:
    """Adjusted Rand index under the permutation model."""
    table = _contingency(a, b)
    n = table.sum()
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    expected = sum_a * sum_b / total if total else 0.0
    max_index = (sum_a + sum_b) / 2.0
    if max_index == expected:
        # both partitions trivial in the same way
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def _entropy(counts) -> float:
    p = np.asarray(counts, dtype=np.float64)
    p = p[p > 0] / p.sum()
    return float(-(p * np.log(p)).sum())


def nmi(a, b) -> float:
    """Mutual information normalised by the arithmetic mean of the entropies."""
    table = _contingency(a, b)
    n = table.sum()
    ha, hb = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if ha == 0.0 and hb == 0.0:
        return 1.0
    nz = table > 0
    pij = table[nz] / n
    pi = table.sum(axis=1)[np.nonzero(nz)[0]] / n
    pj = table.sum(axis=0)[np.nonzero(nz)[1]] / n
    mi = float((pij * (np.log(pij) - np.log(pi) - np.log(pj))).sum())
    return max(0.0, min(1.0, mi / ((ha + hb) / 2.0)))


class _Lca:
    """Binary-lifting LCA over a complete dendrogram, vectorised over query pairs."""

    def __init__(self, dend: Dendrogram):
        parent = dend.parents()
        root = len(parent) - 1
        parent[root] = root
        depth = np.zeros(len(parent), dtype=np.int64)
        # children always have smaller ids than parents, so walk ids downward
        for v in range(root - 1, -1, -1):
            depth[v] = depth[parent[v]] + 1
        levels = max(1, int(depth.max()).bit_length())
        up = [parent]
        for _ in range(levels - 1):
            up.append(up[-1][up[-1]])
        self.up, self.depth = up, depth

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a, b = a.copy(), b.copy()
        swap = self.depth[a] < self.depth[b]
        a[swap], b[swap] = b[swap], a[swap]
        diff = self.depth[a] - self.depth[b]
        for k, up in enumerate(self.up):
            sel = ((diff >> k) & 1).astype(bool)
            a[sel] = up[a[sel]]
        for up in reversed(self.up):
            sel = up[a] != up[b]
            a[sel], b[sel] = up[a[sel]], up[b[sel]]
        return np.where(a == b, a, self.up[0][a])


def _require_complete(dend: Dendrogram) -> None:
    if not dend.complete:
        raise ValueError("metric needs a complete dendrogram (n - 1 merges)")


def _sample_pairs(n: int, count: int, rng: np.random.Generator):
    i = rng.integers(0, n, count)
    j = rng.integers(0, n - 1, count)
    j = j + (j >= i)
    return i, j


def dendrogram_purity(dend: Dendrogram, truth, exact_threshold: int = PURITY_EXACT_THRESHOLD,
                      samples: int = SAMPLE_PAIRS, seed: int = 0,
                      return_samples: bool = False):
    """Mean over same-class leaf pairs of the share of that class under their LCA.

    Exact up to ``exact_threshold`` leaves (per-node class counts), else
    estimated from ``samples`` uniformly drawn same-class pairs.
    """
    _require_complete(dend)
    y = relabel(truth)
    n = dend.n_leaves
    if y.shape[0] != n:
        raise ValueError(f"truth has {y.shape[0]} labels for {n} leaves")
    if n <= exact_threshold:
        k = int(y.max()) + 1
        counts = np.zeros((n + len(dend.merges), k), dtype=np.int64)
        counts[np.arange(n), y] = 1
        total = 0.0
        pairs = 0
        for m in dend.merges:
            cl, cr = counts[m.left_id], counts[m.right_id]
            both = cl + cr
            counts[m.new_id] = both
            cross = cl * cr
            pairs += int(cross.sum())
            total += float((cross * both).sum()) / m.new_size
        value = total / pairs if pairs else 1.0
        return (value, 0) if return_samples else value
    rng = np.random.default_rng(seed)
    order = np.argsort(y, kind="stable")
    starts = np.searchsorted(y[order], np.arange(y.max() + 1))
    sizes = np.bincount(y)
    weights = sizes * (sizes - 1.0)
    if weights.sum() == 0:
        return (1.0, 0) if return_samples else 1.0
    cls = rng.choice(len(sizes), samples, p=weights / weights.sum())
    i = rng.integers(0, sizes[cls])
    j = rng.integers(0, sizes[cls] - 1)
    j = j + (j >= i)
    a, b = order[starts[cls] + i], order[starts[cls] + j]
    lca = _Lca(dend)(a, b)
    # class share under each sampled LCA via per-node class counts of the sampled classes
    leaf_sets = _subtree_class_fraction(dend, y, lca, cls)
    value = float(leaf_sets.mean())
    return (value, samples) if return_samples else value


def _subtree_class_fraction(dend: Dendrogram, y: np.ndarray, nodes: np.ndarray, cls: np.ndarray):
    n = dend.n_leaves
    wanted: Dict[int, set] = {}
    for node, c in zip(nodes.tolist(), cls.tolist()):
        wanted.setdefault(c, set()).add(node)
    sizes = dend.sizes()
    out = np.empty(nodes.shape[0], dtype=np.float64)
    frac: Dict[Tuple[int, int], float] = {}
    for c, targets in wanted.items():
        count = np.zeros(n + len(dend.merges), dtype=np.int64)
        count[:n] = y == c
        for m in dend.merges:
            count[m.new_id] = count[m.left_id] + count[m.right_id]
        for t in targets:
            frac[(t, c)] = count[t] / sizes[t]
    for idx, (node, c) in enumerate(zip(nodes.tolist(), cls.tolist())):
        out[idx] = frac[(node, c)]
    return out


def default_kernel(dist: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + dist)


def unit_kernel(dist: np.ndarray) -> np.ndarray:
    return np.ones_like(dist)


def dasgupta_cost(dend: Dendrogram, points, kernel: Callable = default_kernel,
                  exact_threshold: int = DASGUPTA_EXACT_THRESHOLD,
                  samples: int = SAMPLE_PAIRS, seed: int = 0) -> float:
    """Sum over unordered leaf pairs of ``kernel(D(i, j)) * |leaves(LCA(i, j))|``.

    Exact up to ``exact_threshold`` leaves; above it an unbiased estimate
    from uniformly sampled pairs.
    """
    _require_complete(dend)
    X = as_dataset(points)
    n = dend.n_leaves
    if X.shape[0] != n:
        raise ValueError(f"{X.shape[0]} points for {n} leaves")
    if n <= exact_threshold:
        members: Dict[int, List[int]] = {i: [i] for i in range(n)}
        total = 0.0
        for m in dend.merges:
            left, right = members.pop(m.left_id), members.pop(m.right_id)
            A, B = X[left], X[right]
            diff = A[:, None, :] - B[None, :, :]
            w = kernel(np.sqrt((diff * diff).sum(axis=2)))
            total += float(w.sum()) * m.new_size
            members[m.new_id] = left + right
        return total
    rng = np.random.default_rng(seed)
    i, j = _sample_pairs(n, samples, rng)
    lca = _Lca(dend)(i, j)
    diff = X[i] - X[j]
    w = kernel(np.sqrt((diff * diff).sum(axis=1)))
    return float((w * dend.sizes()[lca]).mean() * n * (n - 1) / 2.0)


def delta_inversions(dend: Dendrogram, delta: float) -> int:
    """Count ancestor pairs ``(U, V)`` with ``cost(U) >= (1 + delta) * cost(V)``."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    n = dend.n_leaves
    if not dend.merges:
        return 0
    factor = 1.0 + delta
    children = {m.new_id: (m.left_id, m.right_id) for m in dend.merges}
    cost = {m.new_id: m.distance for m in dend.merges}
    parent = dend.parents()
    count = 0
    ancestors: List[float] = []  # sorted costs on the current root path
    for root in np.flatnonzero(parent == -1).tolist():
        if root < n:
            continue
        stack = [(root, True)]
        while stack:
            node, entering = stack.pop()
            if not entering:
                ancestors.pop(bisect.bisect_left(ancestors, cost[node]))
                continue
            cu = cost[node]
            idx = bisect.bisect_right(ancestors, cu / factor)
            while idx < len(ancestors) and cu >= factor * ancestors[idx]:
                idx += 1
            while idx > 0 and not cu >= factor * ancestors[idx - 1]:
                idx -= 1
            count += idx
            bisect.insort(ancestors, cu)
            stack.append((node, False))
            stack.extend((c, True) for c in children[node] if c >= n)
    return count


def cut_thresholds(dend: Dendrogram, policy: CutPolicy = CutPolicy(),
                   lo: Optional[float] = None, hi: Optional[float] = None) -> np.ndarray:
    d = dend.distances()
    if policy.mode == "all_thresholds":
        return np.unique(d)
    positive = d[d > 0]
    lo = lo if lo is not None else (positive.min() if positive.size else 1.0)
    hi = hi if hi is not None else 2.0 * max(d.max(initial=0.0), lo)
    steps = math.ceil(math.log(hi / lo) / math.log(policy.log_base)) if hi > lo else 0
    grid = lo * policy.log_base ** np.arange(steps + 1)
    return grid


def cut_scores(dend: Dendrogram, truth, metric: Callable = ari,
               policy: CutPolicy = CutPolicy(), lo=None, hi=None) -> List[Tuple[float, float]]:
    return [(float(t), metric(flatten_at_threshold(dend, t), truth))
            for t in cut_thresholds(dend, policy, lo, hi)]


def best_cut_score(dend: Dendrogram, truth, metric: Callable = ari,
                   policy: CutPolicy = CutPolicy(), lo=None, hi=None) -> float:
    """Best ``metric`` over thresholded cuts of ``dend``."""
    return max(score for _, score in cut_scores(dend, truth, metric, policy, lo, hi))
