import numpy as np
import pytest
from oracles import neighbor_pairs_bruteforce

from p2plab.neighbors import (LOCAL, PERIODIC, REMOTE, classify_interactions, e2_neighbors,
                              stripe_of)
from p2plab.particles import generate
from p2plab.tree import build_adaptive_tree, build_uniform_tree


def _pairs(nb):
    tgt = nb.targets()
    return {(min(a, b), max(a, b)) for a, b in zip(tgt.tolist(), nb.src.tolist()) if a != b}


@pytest.mark.parametrize("periodic", [False, True])
@pytest.mark.parametrize("dim,N,L", [(2, 4 ** 3 * 4, 3), (3, 8 ** 2 * 8, 2)])
def test_uniform_matches_bruteforce(dim, N, L, periodic):
    tree = build_uniform_tree(N, L, dim, periodic)
    nb = e2_neighbors(tree)
    assert _pairs(nb) == neighbor_pairs_bruteforce(tree)


def test_uniform_interior_has_full_stencil():
    tree = build_uniform_tree(16 * 16 * 4, 4, 2)
    nb = e2_neighbors(tree, include_self=False)
    counts = nb.counts()
    assert counts.max() == 8
    assert counts.min() == 3            # corners
    periodic = e2_neighbors(build_uniform_tree(16 * 16 * 4, 4, 2, True), include_self=False)
    assert np.all(periodic.counts() == 8)


@pytest.mark.parametrize("kind", ["uniform", "plummer"])
@pytest.mark.parametrize("periodic", [False, True])
def test_adaptive_matches_bruteforce(kind, periodic):
    tree = build_adaptive_tree(generate(kind, 400, 2, 4), 6, periodic=periodic)
    nb = e2_neighbors(tree)
    assert _pairs(nb) == neighbor_pairs_bruteforce(tree)


def test_geometric_rule_on_uniform_tree_equals_stencil():
    tree = build_uniform_tree(8 * 8 * 4, 3, 2)
    a = e2_neighbors(tree)
    b = e2_neighbors(tree, geometric=True)
    assert np.array_equal(a.ptr, b.ptr) and np.array_equal(a.src, b.src)


def test_self_included_once_and_sorted():
    tree = build_adaptive_tree(generate("uniform", 300, 3, 1), 5)
    nb = e2_neighbors(tree)
    for i in range(tree.n_leaves):
        row = nb.of(i)
        assert (row == i).sum() == 1
        assert np.all(np.diff(row) > 0)


def test_shifts_antisymmetric():
    tree = build_adaptive_tree(generate("uniform", 500, 3, 8), 4, periodic=True)
    nb = e2_neighbors(tree)
    tgt = nb.targets()
    lookup = {(a, b): tuple(s) for a, b, s in zip(tgt.tolist(), nb.src.tolist(), nb.shift.tolist())}
    assert any(any(s) for s in lookup.values())
    for (a, b), s in lookup.items():
        assert lookup[(b, a)] == tuple(-v for v in s)


def test_stripes_cover_evenly():
    s = stripe_of(10, 3)
    assert s.tolist() == [0, 0, 0, 0, 1, 1, 1, 2, 2, 2]


def test_classification_rules(small_case):
    tree, pairs, stats = small_case
    stripe = stripe_of(tree.n_leaves, 3)
    periodic = np.any(pairs.shift != 0, axis=1)
    assert np.all(pairs.kind[periodic] == PERIODIC)
    diff = stripe[pairs.target] != stripe[pairs.source]
    assert np.all(pairs.kind[~periodic & diff] == REMOTE)
    assert np.all(pairs.kind[~periodic & ~diff] == LOCAL)
    n = stats.n_interactions
    assert n["local"] + n["remote"] + n["periodic"] == n["total"] == len(pairs)


def test_single_partition_has_no_remote():
    tree = build_adaptive_tree(generate("uniform", 300, 2, 2), 4)
    _, st = classify_interactions(tree, 1)
    assert st.n_interactions["remote"] == 0 and st.n_interactions["periodic"] == 0


def test_stats_exclude_self():
    tree = build_uniform_tree(8 * 8 * 4, 3, 2)
    _, st = classify_interactions(tree)
    assert st.n_leaves == 64
    assert st.max_e2 == 8
    assert st.n_interactions["total"] == 64 + int(round(st.avg_e2 * 64))


def test_pair_iteration_yields_named_kinds(small_case):
    _, pairs, _ = small_case
    first = next(iter(pairs))
    assert first.kind in ("local", "remote", "periodic")


def test_bad_partitions():
    tree = build_uniform_tree(16, 1, 2)
    with pytest.raises(ValueError):
        classify_interactions(tree, 0)
