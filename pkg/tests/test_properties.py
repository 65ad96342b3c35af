import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import lru_misses

from p2plab import model as m
from p2plab.cachesim import CacheConfig, MemoryTrace, simulate_cache

share = st.floats(0.0, 1.0)
pos = st.floats(1e-3, 1e3)


@given(share, pos, pos)
def test_composite_monotone_and_fixed_point(s, x1, x2):
    lo, hi = sorted((x1, x2))
    assert m.composite_speedup(s, lo) <= m.composite_speedup(s, hi) * (1 + 1e-12)
    assert m.composite_speedup(s, 1.0) == 1.0


@given(st.lists(st.floats(1e-3, 1.0), min_size=4, max_size=4),
       st.lists(pos, min_size=4, max_size=4))
def test_p2p_between_min_and_max(raw, xs):
    s = m.normalize_shares(raw)
    x = m.p2p_speedup(s, xs)
    assert min(xs) * (1 - 1e-12) <= x <= max(xs) * (1 + 1e-12)


@given(share, pos)
def test_total_bounded_by_part(s, x):
    t = m.total_speedup(s, x)
    assert t <= max(x, 1.0) * (1 + 1e-12)
    if x >= 1:
        assert t <= x * (1 + 1e-12)


@given(st.integers(1, 10**7), st.integers(1, 4096), st.integers(1, 4096))
def test_dbim_transfer_monotone(N, t1, t2):
    if t1 != t2:
        lo, hi = sorted((t1, t2))
        assert m.dbim_transfer_speedup(N, lo) > m.dbim_transfer_speedup(N, hi)
    assert m.dbim_transfer_speedup(N + 1, t1) > m.dbim_transfer_speedup(N, t1)


@given(st.integers(2, 12))
def test_dbim_column_prediction_non_increasing(L):
    N = 4 ** L * 256
    xs = [m.predict_dbim(m.DbimParams.from_nt(N, t)).X_p2p for t in (16, 64, 256)]
    assert xs[0] >= xs[1] >= xs[2]


@given(st.floats(-1, 1), st.floats(-0.5, 0.5),
       st.lists(st.integers(1, 4096), min_size=2, max_size=12, unique=True))
def test_fit_reproduces_coefficients(a, b, ts):
    f = m.fit_log_share([(t, a + b * math.log(t)) for t in ts])
    assert abs(f.a - a) <= 1e-9 and abs(f.b - b) <= 1e-9


@given(st.sampled_from([2, 4, 8, 16, 32, 64]), st.floats(0.05, 1.0),
       st.floats(0.1, 10), st.floats(0.1, 10), st.integers(1, 5), st.integers(1, 50))
def test_photons_breakdown_consistent(t, share_local, d, v, lb, lr):
    p = m.PhotonsParams(t=t, leafs=500 / t, interactions=500 / t * 14, E2=14, max_E2=26,
                        launches_base=lb, launches_rest=lr, share_local=share_local)
    b = m.predict_photons(p, m.LocalityInputs(d, v, 1.0, 1.0, 10.0))
    assert abs(b.recompute_p2p() - b.X_p2p) <= 1e-12 * b.X_p2p
    assert all(x > 0 and math.isfinite(x) for x in b.xs())


@given(st.integers(1, 10), st.sampled_from([16, 64, 256]), st.integers(1, 4),
       st.sampled_from(["printed", "column"]))
def test_dbim_breakdown_consistent(L, t, rf, variant):
    b = m.predict_dbim(m.DbimParams(4 ** L * t, L, t, rf), variant=variant)
    assert abs(b.recompute_p2p() - b.X_p2p) <= 1e-12 * b.X_p2p


accesses = st.lists(st.tuples(st.integers(0, 4000), st.sampled_from([1, 8, 16, 100, 300])),
                    max_size=8)


@settings(max_examples=60, deadline=None)
@given(st.lists(accesses, min_size=1, max_size=12), st.sampled_from([None, 1, 2, 4]), st.sampled_from([1, 2, 5]), st.booleans(),
       st.sampled_from([None, 8 * 64]))
def test_simulator_matches_oracle(lists, ways, group, coalesce, cap):
    cfg = CacheConfig(capacity=cap, line=64, ways=ways if cap else None, group=group,
                      coalesce=coalesce)
    got = simulate_cache(MemoryTrace.from_lists(lists), cfg)
    assert got == lru_misses(lists, 64, cfg.capacity, cfg.ways, group, coalesce)
