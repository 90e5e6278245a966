import math

import numpy as np
import pytest
from scipy import integrate, stats

from approxhac.geometry import Centroid, DimensionMismatchError
from approxhac.lsh import (
    LshNns,
    LshParams,
    default_k_l,
    estimate_collision_probability,
    lsh_build,
    pstable_collision_probability,
    with_seed,
)
from approxhac.nns import DuplicateIdError, EmptyStoreError, MissingIdError


def cloud(n, d, seed):
    rng = np.random.default_rng(seed)
    return [Centroid(x, 1, i) for i, x in enumerate(rng.normal(size=(n, d)))]


def params(**kw):
    base = dict(c=2.0, beta=0.01, big_delta=20.0, k_ands=4, l_ors=8, seed=1)
    base.update(kw)
    return LshParams(**base)


@pytest.mark.parametrize("dist,width", [(0.5, 4.0), (1.0, 4.0), (2.0, 4.0), (3.0, 1.0)])
def test_closed_form_matches_integral(dist, width):
    # P = int_0^w (1/r) f(t/r) (1 - t/w) dt with f the density of |N(0,1)|
    f = lambda t: 2.0 * stats.norm.pdf(t / dist) / dist * (1.0 - t / width)
    ref, _ = integrate.quad(f, 0.0, width)
    assert pstable_collision_probability(dist, width) == pytest.approx(ref, abs=1e-9)


def test_monte_carlo_agrees_with_closed_form():
    rng = np.random.default_rng(0)
    for dist in (1.0, 2.0):
        p = estimate_collision_probability(dist, 4.0, 5, 40_000, rng)
        assert abs(p - pstable_collision_probability(dist, 4.0)) < 0.015


def test_params_validation_and_scales():
    with pytest.raises(ValueError):
        params(c=1.0)
    with pytest.raises(ValueError):
        params(beta=0.0)
    p = params(beta=0.3, big_delta=5.0)
    assert list(p.scales) == list(range(math.ceil(math.log2(0.3)), math.ceil(math.log2(5.0)) + 1))


def test_default_k_l_grows_with_n():
    p = LshParams(c=2.0, beta=0.01, big_delta=10.0)
    k1, l1 = default_k_l(100, p)
    k2, l2 = default_k_l(10_000, p)
    assert k2 >= k1 and l2 > l1
    assert l1 == math.ceil(100 ** 0.25 * math.log(100))
    assert default_k_l(100, params()) == (4, 8)


def test_hash_is_deterministic_per_seed():
    pts = cloud(20, 3, 0)
    a, b = lsh_build(pts, params()), lsh_build(pts, params())
    u = np.array([0.1, 0.2, 0.3])
    assert np.array_equal(a.hash(u), b.hash(u))
    c = lsh_build(pts, with_seed(params(), 2))
    assert not np.array_equal(a.hash(u), c.hash(u))
    with pytest.raises(DimensionMismatchError):
        a.hash(np.zeros(2))


def test_insert_delete_bookkeeping():
    pts = cloud(50, 4, 1)
    nns = lsh_build(pts, params())
    assert len(nns) == 50
    with pytest.raises(DuplicateIdError):
        nns.insert(pts[0])
    for c in pts[:49]:
        nns.delete(c.id)
    assert len(nns) == 1
    # only the survivor's buckets remain
    assert (nns.bucket_occupancy() == 1).all()
    with pytest.raises(MissingIdError):
        nns.delete(0)
    with pytest.raises(EmptyStoreError):
        nns.query(pts[49].coords, excluded=49)


def test_query_returns_live_point_with_true_distance():
    pts = cloud(200, 5, 2)
    nns = lsh_build(pts, params())
    rng = np.random.default_rng(5)
    for c in pts[::2]:
        nns.delete(c.id)
    live = {c.id: c for c in pts[1::2]}
    for _ in range(100):
        u = rng.normal(size=5)
        r = nns.query(u)
        assert r.neighbor.id in live
        assert r.distance == pytest.approx(float(np.linalg.norm(u - r.neighbor.coords)), rel=1e-12)


def test_contract_rate_against_linear_scan():
    # the (c, beta) contract should hold for the overwhelming majority of queries
    pts = cloud(400, 8, 3)
    X = np.stack([c.coords for c in pts])
    # default K/L sizing; tiny hand-picked K, L (e.g. 4, 8) violate far more often
    nns = lsh_build(pts, params(big_delta=40.0, k_ands=None, l_ors=None))
    rng = np.random.default_rng(9)
    bad = 0
    trials = 300
    for _ in range(trials):
        u = X[rng.integers(len(pts))] + rng.normal(scale=0.3, size=8)
        best = float(np.linalg.norm(X - u, axis=1).min())
        r = nns.query(u)
        bad += not nns.spec.admits(r.distance, best)
    assert bad / trials <= 0.05
