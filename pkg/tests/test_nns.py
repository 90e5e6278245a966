import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from approxhac.geometry import Centroid, DimensionMismatchError
from approxhac.nns import (
    DuplicateIdError,
    EmptyStoreError,
    ExactNns,
    MissingIdError,
    NnsApproxSpec,
)


def pt(cid, *xs):
    return Centroid(np.array(xs, dtype=np.float64), 1, cid)


def test_query_excludes_self_and_breaks_ties_by_id():
    nns = ExactNns(1, [pt(5, 1.0), pt(2, -1.0), pt(9, 0.0)])
    r = nns.query(np.array([0.0]), excluded=9)
    assert r.neighbor.id == 2 and r.distance == 1.0
    r = nns.query(np.array([0.0]))
    assert r.neighbor.id == 9 and r.distance == 0.0


def test_excluded_twin_still_returns_other_twin():
    nns = ExactNns(2, [pt(0, 1.0, 1.0), pt(1, 1.0, 1.0), pt(2, 5.0, 5.0)])
    assert nns.query(np.array([1.0, 1.0]), excluded=0).neighbor.id == 1


def test_errors():
    nns = ExactNns(2)
    with pytest.raises(EmptyStoreError):
        nns.query(np.zeros(2))
    nns.insert(pt(0, 0.0, 0.0))
    with pytest.raises(EmptyStoreError):
        nns.query(np.zeros(2), excluded=0)
    with pytest.raises(DuplicateIdError):
        nns.insert(pt(0, 1.0, 1.0))
    with pytest.raises(MissingIdError):
        nns.delete(7)
    with pytest.raises(DimensionMismatchError):
        nns.insert(pt(1, 1.0))
    with pytest.raises(ValueError):
        NnsApproxSpec(0.5, 0.0)


def test_spec_admits():
    s = NnsApproxSpec(2.0, 0.5)
    assert s.admits(2.5, 1.0) and not s.admits(2.51, 1.0)


ops = st.lists(
    st.one_of(
        st.tuples(st.just("ins"), st.integers(0, 30), st.tuples(st.integers(-5, 5), st.integers(-5, 5))),
        st.tuples(st.just("del"), st.integers(0, 30), st.none()),
        st.tuples(st.just("q"), st.integers(0, 30), st.tuples(st.integers(-6, 6), st.integers(-6, 6))),
    ),
    max_size=80,
)


@settings(max_examples=150, deadline=None)
@given(ops)
def test_matches_linear_scan_oracle(script):
    nns = ExactNns(2)
    live = {}
    for op, cid, xy in script:
        if op == "ins" and cid not in live:
            live[cid] = np.array(xy, dtype=np.float64) / 2.0
            nns.insert(Centroid(live[cid], 1, cid))
        elif op == "del" and cid in live:
            del live[cid]
            nns.delete(cid)
        elif op == "q":
            u = np.array(xy, dtype=np.float64) / 3.0
            cand = [(float(np.linalg.norm(v - u)), k) for k, v in live.items() if k != cid]
            if not cand:
                with pytest.raises(EmptyStoreError):
                    nns.query(u, excluded=cid)
                continue
            r = nns.query(u, excluded=cid)
            best = min(cand)
            assert r.distance == pytest.approx(best[0], rel=1e-12, abs=0)
            # tie-break: smallest id among exact minima
            assert r.neighbor.id == min(k for d, k in cand if r.distance == nns_dist(nns, u, k))
        assert sorted(nns.ids()) == sorted(live)
        assert len(nns) == len(live)


def nns_dist(nns, u, k):
    from approxhac.geometry import euclidean_dist
    return euclidean_dist(u, nns.get(k).coords)
