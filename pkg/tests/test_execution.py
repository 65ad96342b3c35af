import numpy as np
import pytest
from oracles import direct_forces

from p2plab import execution as ex
from p2plab.cachesim import MemoryTrace
from p2plab.layouts import pack_dbim, pack_indexing, pack_pattern_redundant, pack_redundant, pattern_weights
from p2plab.neighbors import classify_interactions, e2_neighbors
from p2plab.particles import ParticleSet, generate
from p2plab.tree import build_adaptive_tree, build_uniform_tree


def _forces(tree, pairs, batch=50):
    ib, _ = pack_indexing(tree, pairs)
    rb, _ = pack_redundant(pairs, tree, batch)
    fi, _, ti = ex.run_p2p_indexing(ib)
    parts, _, tr = ex.run_p2p_redundant(rb)
    return fi, ex.reduce_partials(parts, tree.n_particles), ti, tr


def test_layouts_agree_with_oracle(small_case):
    tree, pairs, _ = small_case
    fi, fr, ti, tr = _forces(tree, pairs)
    o = ex.brute_force_oracle(tree, pairs)
    assert ex.relative_error(fi, o) <= 1e-12
    assert ex.relative_error(fr, o) <= 1e-12
    assert ti.launches == len(set(pairs.kind.tolist()))
    assert tr.launches == -(-len(pairs) // 50)


def test_complete_neighbourhood_equals_direct_sum():
    # 4 leaves of a level-1 quadtree are mutually adjacent, so the near field is everything
    p = generate("uniform", 200, 2, 3)
    tree = build_adaptive_tree(p, 50)
    assert tree.n_leaves == 4
    pairs, _ = classify_interactions(tree)
    fi, fr, _, _ = _forces(tree, pairs)
    d = direct_forces(tree.particles.positions, tree.particles.mass, 1e-3)
    assert ex.relative_error(fi, d) <= 1e-12
    assert ex.relative_error(fr, d) <= 1e-12


def test_reduce_partials_order_and_bounds():
    parts = ex.PartialResults(np.array([[1.0], [2.0], [4.0]]), np.array([1, 0, 0]),
                              np.array([0, 1, 0]), np.array([0, 1, 0]))
    out = ex.reduce_partials(parts, 2)
    assert out[:, 0].tolist() == [5.0, 2.0]
    bad = ex.PartialResults(np.ones((1, 1)), np.zeros(1, int), np.zeros(1, int), np.array([5]))
    with pytest.raises(ValueError, match="outside"):
        ex.reduce_partials(bad, 2)


def test_zero_softening_coincident_rejected():
    pos = np.array([[0.2, 0.2], [0.2, 0.2], [0.7, 0.7]])
    tree = build_adaptive_tree(ParticleSet.from_arrays(pos), 4)
    pairs, _ = classify_interactions(tree)
    ib, _ = pack_indexing(tree, pairs)
    with pytest.raises(ValueError, match="coincident"):
        ex.run_p2p_indexing(ib, ex.PairKernel(softening=0.0))
    rb, _ = pack_redundant(pairs, tree)
    with pytest.raises(ValueError, match="zero separation"):
        ex.run_p2p_redundant(rb, ex.PairKernel(softening=0.0))


def test_kernel_validation():
    with pytest.raises(ValueError):
        ex.PairKernel(kind="coulomb")
    with pytest.raises(ValueError):
        ex.PairKernel(softening=-1)


def test_redundant_trace_is_self_contained(small_case):
    tree, pairs, _ = small_case
    rb, _ = pack_redundant(pairs, tree, 64)
    _, trace, _ = ex.run_p2p_redundant(rb, trace_on=True)
    assert trace.n_threads == len(pairs)
    assert set(np.unique(trace.launch).tolist()) == set(range(rb.n_batches))
    # corrupt one access: the check must abort and name the record
    tr, amap = ex.redundant_trace(rb)
    addr = tr.addr.copy()
    addr[10] = amap.base["records"] + int(rb.offsets[-1]) + 8
    bad = MemoryTrace(tr.thread, tr.launch, addr, tr.size, tr.tag, tr.n_threads)
    with pytest.raises(RuntimeError, match=f"record {int(tr.thread[10])} touched"):
        ex.check_self_contained(bad, rb, amap)


def test_indexing_trace_touches_only_mapped_buffers(small_case):
    tree, pairs, _ = small_case
    ib, _ = pack_indexing(tree, pairs)
    tr, amap = ex.indexing_trace(ib)
    assert tr.n_threads == tree.n_particles
    lo = min(amap.base.values())
    assert tr.addr.min() >= lo and tr.addr.max() < amap.next
    assert np.all(tr.addr % 4096 < 4096)


def test_trace_window_shrinks(small_case):
    tree, pairs, _ = small_case
    ib, _ = pack_indexing(tree, pairs)
    rb, _ = pack_redundant(pairs, tree)
    k, n_hi, r_hi = ex.trace_window(tree, ib, rb, 10 ** 12)
    assert (k, n_hi, r_hi) == (tree.n_leaves, tree.n_particles, len(pairs))
    k, n_hi, r_hi = ex.trace_window(tree, ib, rb, 20000)
    ci, cr = ex.trace_counts(ib, rb, n_hi, r_hi)
    assert k < tree.n_leaves and max(ci, cr) <= 20000
    assert np.all(pairs.target[:r_hi] < k)


def test_measure_phases_returns_caller_order():
    p = generate("uniform", 150, 2, 4)
    tree = build_adaptive_tree(p, 50)
    pairs, _ = classify_interactions(tree)
    d = direct_forces(p.positions, p.mass, 1e-3)
    for lay in ("indexing", "redundant"):
        times, forces, vol = ex.measure_phases(lay, tree, pairs, repetitions=2)
        assert ex.relative_error(forces, d) <= 1e-12
        assert all(v >= 0 for v in times.as_dict().values())
        assert times.transfer_bytes == vol.phases["transfer"]
    with pytest.raises(ValueError):
        ex.measure_phases("tiled", tree, pairs)


@pytest.mark.parametrize("rf", [1, 3])
def test_dbim_kernel_matches_oracle(rf):
    tree = build_uniform_tree(16 * 16, 2, 2)
    nb = e2_neighbors(tree)
    rng = np.random.default_rng(0)
    vals = rng.standard_normal(256) + 1j * rng.standard_normal(256)
    table, _ = pack_pattern_redundant(16, rf)
    buf, _ = pack_dbim(tree, nb, vals, table, "redundant")
    out, times = ex.run_dbim(buf)
    ref = ex.dbim_oracle(tree, nb, vals, pattern_weights(16))
    assert ex.relative_error(out, ref) <= 1e-12
    assert times.launches == 1
