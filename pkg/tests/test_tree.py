import numpy as np
import pytest

from p2plab.particles import ParticleSet, generate
from p2plab.tree import build_adaptive_tree, build_uniform_tree, uniform_level_for


def test_uniform_leaf_count_from_level():
    tree = build_uniform_tree(65536, 5, 2)
    assert tree.n_leaves == 1024
    assert tree.t == 64
    assert np.all(tree.count == 64)


def test_uniform_morton_order_first_quad():
    tree = build_uniform_tree(4 * 16, 2, 2)
    assert tree.grid[:4].tolist() == [[0, 0], [1, 0], [0, 1], [1, 1]]
    assert tree.grid[4].tolist() == [2, 0]


def test_uniform_samples_inside_their_boxes():
    tree = build_uniform_tree(8 * 8, 1, 3)
    for i in range(tree.n_leaves):
        s, c = tree.start[i], tree.count[i]
        p = tree.particles.positions[s:s + c]
        assert np.all(np.abs(p - tree.centers[i]) <= tree.extents[i] + 1e-15)


@pytest.mark.parametrize("N,L,msg", [(100, 2, "not divisible"), (4 * 8, 1, "perfect square")])
def test_uniform_rejects_bad_sizes(N, L, msg):
    with pytest.raises(ValueError, match=msg):
        build_uniform_tree(N, L, 2)


def test_uniform_level_for():
    assert uniform_level_for(65536, 64) == 5
    with pytest.raises(ValueError):
        uniform_level_for(65536, 48)


@pytest.mark.parametrize("t", [1, 2, 8, 33])
def test_adaptive_partition(t):
    p = generate("plummer", 1000, 3, 7)
    tree = build_adaptive_tree(p, t)
    assert tree.count.sum() == 1000
    assert np.all(tree.count <= t)
    assert np.array_equal(np.sort(tree.order), np.arange(1000))
    assert np.array_equal(tree.particles.positions, p.positions[tree.order])
    ends = tree.start + tree.count
    assert np.array_equal(tree.start[1:], ends[:-1])
    for i in range(tree.n_leaves):
        pts = tree.particles.positions[tree.start[i]:ends[i]]
        assert np.all(pts >= tree.centers[i] - tree.extents[i] - 1e-15)
        assert np.all(pts <= tree.centers[i] + tree.extents[i] + 1e-15)


def test_adaptive_boxes_tile_the_unit_cube():
    tree = build_adaptive_tree(generate("uniform", 500, 2, 1), 4)
    area = np.prod(2 * tree.extents, axis=1).sum()
    assert area == pytest.approx(1.0)


def test_adaptive_left_child_first():
    pos = np.array([[0.9, 0.5], [0.1, 0.5], [0.6, 0.5], [0.3, 0.5]])
    tree = build_adaptive_tree(ParticleSet.from_arrays(pos), 1)
    assert tree.particles.positions[:, 0].tolist() == [0.1, 0.3, 0.6, 0.9]


def test_adaptive_coincident_points_flagged():
    pos = np.full((5, 2), 0.3)
    tree = build_adaptive_tree(ParticleSet.from_arrays(pos), 2)
    assert tree.n_leaves == 1
    assert tree.overfull == ((0, "coincident"),)


def test_adaptive_max_depth_flagged():
    tree = build_adaptive_tree(generate("uniform", 64, 2, 0), 1, max_depth=3)
    assert tree.n_leaves == 8
    assert all(r == "max_depth" for _, r in tree.overfull)


def test_leafs_non_increasing_in_t():
    p = generate("plummer", 3000, 3, 2)
    counts = [build_adaptive_tree(p, t).n_leaves for t in (2, 4, 8, 16, 32, 64)]
    # independent count: a median-split tree over n points at threshold t has
    # 2^ceil(log2(n / t)) leaves when every split halves exactly
    assert counts == sorted(counts, reverse=True)
    assert counts[-1] == 2 ** int(np.ceil(np.log2(3000 / 64)))
