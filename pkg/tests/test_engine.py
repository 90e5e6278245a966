import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.cluster.hierarchy import linkage

from approxhac.engine import (
    HacConfig,
    StepOracle,
    exact_hac,
    invariant_check,
    requeue_cap,
    run_hac,
    run_hac_bucket,
)
from approxhac.geometry import DistanceBounds, compute_bounds
from approxhac.nns import ExactNns, QueryResult

from conftest import naive_centroid_hac


def merges_of(dend):
    return [(m.left_id, m.right_id, m.new_id, m.distance, m.new_size) for m in dend.merges]


def assert_same_sequence(got, ref):
    assert len(got) == len(ref)
    for g, r in zip(got, ref):
        assert g[:3] == r[:3] and g[4] == r[4], (g, r)
        assert g[3] == pytest.approx(r[3], rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("seed", range(10))
def test_exact_mode_matches_naive_oracle(seed):
    X = np.random.default_rng(seed).normal(size=(24, 3))
    assert_same_sequence(merges_of(exact_hac(X)), naive_centroid_hac(X))


def test_exact_mode_heights_match_scipy_centroid_linkage():
    X = np.random.default_rng(11).uniform(size=(40, 2))
    ours = np.sort(exact_hac(X).distances())
    ref = np.sort(linkage(X, method="centroid")[:, 2])
    np.testing.assert_allclose(ours, ref, rtol=1e-9)


def test_equilateral_triangle():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    d = exact_hac(tri).distances()
    assert d[0] == pytest.approx(1.0, abs=1e-12)
    assert d[1] == pytest.approx(math.sqrt(3) / 2, abs=1e-12)


@pytest.mark.parametrize("eps", [0.1, 0.5, 1.0])
def test_heap_approx_bound_and_requeue_cap(eps):
    X = np.random.default_rng(int(eps * 10)).normal(size=(80, 4))
    oracle = StepOracle()
    dend, stats = run_hac(X, HacConfig(epsilon=eps), on_merge=oracle)
    dend.validate()
    assert dend.complete and stats.merges == 79
    assert oracle.violations(1.0 + eps) == 0
    assert stats.max_requeues_per_centroid <= requeue_cap(eps, compute_bounds(X))


@pytest.mark.parametrize("eps", [0.1, 0.5])
def test_bucket_baseline_bound(eps):
    X = np.random.default_rng(7).normal(size=(60, 3))
    oracle = StepOracle()
    dend, stats = run_hac_bucket(X, HacConfig(mode="bucket_approx", epsilon=eps), on_merge=oracle)
    dend.validate()
    assert dend.complete and stats.rounds >= 1
    assert oracle.violations(1.0 + eps) == 0


def test_bucket_issues_at_least_as_many_queries_as_heap():
    X = np.random.default_rng(2).normal(size=(100, 3))
    _, heap = run_hac(X, HacConfig(epsilon=0.1))
    _, bucket = run_hac(X, HacConfig(mode="bucket_approx", epsilon=0.1))
    assert bucket.nns_queries >= heap.nns_queries


def test_config_validation():
    with pytest.raises(ValueError):
        HacConfig(mode="nope")
    with pytest.raises(ValueError):
        HacConfig(nns_backend="nope")
    with pytest.raises(ValueError):
        HacConfig(epsilon=-0.1)
    with pytest.raises(ValueError):
        HacConfig(mode="bucket_approx", epsilon=0.0)
    cfg = HacConfig(mode="exact", epsilon=0.3).normalized()
    assert cfg.epsilon == 0.0 and cfg.nns_backend == "exact"
    with pytest.raises(ValueError):
        run_hac(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        run_hac(np.zeros((3, 2)))


def test_requeue_cap_formula():
    b = DistanceBounds(1.0, 10.0)
    assert requeue_cap(0.1, b) == math.ceil(math.log(20.0) / math.log(1.1))
    assert requeue_cap(0.0, b) == math.inf


def test_duplicate_points_merge_first_at_zero():
    X = np.array([[0.0, 0.0], [5.0, 5.0], [0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [0.0, -0.0]])
    dend, stats = run_hac(X, HacConfig(mode="exact"))
    dend.validate()
    assert stats.duplicate_point_merges == 3 and stats.merges == 5
    assert [m.distance for m in dend.merges[:3]] == [0.0, 0.0, 0.0]
    assert dend.merges[-1].new_size == 6


class ScriptedNns(ExactNns):
    """Exact backend except that some ids are pointed at a fixed target while it lives."""

    def __init__(self, dim, script):
        super().__init__(dim)
        self.script = script

    def query(self, u, excluded=None):
        target = self.script.get(excluded)
        if target in self:
            c = self.get(target)
            return QueryResult(c, float(np.linalg.norm(u - c.coords)))
        return super().query(u, excluded)


def test_identical_centroid_is_absorbed():
    # 0 and 1 merge onto point 2, which a bad backend kept pointed far away
    X = np.array([[-1.0], [1.0], [0.0], [100.0]])
    nns = ScriptedNns(1, {0: 1, 1: 0, 2: 3})
    dend, stats = run_hac(X, HacConfig(epsilon=0.0), nns=nns)
    dend.validate()
    assert stats.identical_centroid_merges == 1
    first, second = dend.merges[0], dend.merges[1]
    assert (first.left_id, first.right_id, first.distance) == (0, 1, 2.0)
    assert (second.left_id, second.right_id, second.distance) == (2, 4, 0.0)
    assert second.new_size == 3


def test_stale_accounting():
    X = np.random.default_rng(4).normal(size=(150, 4))
    _, s = run_hac(X, HacConfig(epsilon=0.1))
    # every dequeue merges, is skipped, or requeues
    heap_merges = s.merges - s.duplicate_point_merges - s.identical_centroid_merges
    assert s.dequeues == heap_merges + s.skipped_dequeues + s.requeues
    assert s.requeues <= s.stale_dequeues
    assert s.gamma == s.stale_dequeues / s.merges
    assert s.as_dict()["gamma"] == round(s.gamma, 6)
    assert s.nns_inserts - s.nns_deletes == 1


def test_lsh_backend_runs_and_is_deterministic():
    X = np.random.default_rng(8).normal(size=(120, 3))
    cfg = HacConfig(nns_backend="lsh_adaptive", seed=5, lsh_k=4, lsh_l=8)
    d1, s1 = run_hac(X, cfg)
    d2, _ = run_hac(X, cfg)
    d1.validate()
    assert d1.merges == d2.merges
    assert s1.merges == 119
    oracle = StepOracle()
    run_hac(X, cfg, on_merge=oracle)
    frac = oracle.violations(cfg.c_target * (1 + cfg.epsilon)) / len(oracle.steps)
    assert frac <= 0.05


def test_invariant_check_report():
    X = np.random.default_rng(9).normal(size=(30, 2))
    rep = invariant_check(X, HacConfig(epsilon=0.2, debug=True))
    assert rep["approx_violations"] == 0 and rep["requeue_cap_ok"] and rep["dendrogram_complete"]
    assert rep["max_ratio"] <= 1.2 * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 3)),
              elements=st.integers(-4, 4).map(float)),
       st.sampled_from([0.0, 0.1, 1.0]))
def test_any_input_gives_valid_complete_dendrogram(X, eps):
    # small integer grids force duplicates, ties and inversions
    if len({r.tobytes() for r in X + 0.0}) < 2:
        return
    oracle = StepOracle()
    dend, stats = run_hac(X, HacConfig(epsilon=eps), on_merge=oracle)
    dend.validate()
    assert dend.complete and stats.merges == X.shape[0] - 1
    assert oracle.violations(1.0 + eps) == 0
