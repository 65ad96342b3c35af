import math

import numpy as np
import pytest

from p2plab.layouts import (HEADER_BYTES, SENTINEL, decode_shift, pack_dbim, pack_indexing,
                            pack_pattern_redundant, pack_redundant, pattern_weights, shift_code)
from p2plab.neighbors import KIND_NAMES, classify_interactions, e2_neighbors
from p2plab.particles import generate
from p2plab.tree import build_adaptive_tree, build_uniform_tree


def test_shift_code_round_trip():
    import itertools
    for d in (2, 3):
        for s in itertools.product((-1, 0, 1), repeat=d):
            code = int(shift_code(np.array([s]))[0])
            assert decode_shift(code, d) == s
    assert int(shift_code(np.zeros((1, 3), dtype=int))[0]) == 13


def test_indexing_rows_hold_every_pair(small_case):
    tree, pairs, _ = small_case
    buf, vol = pack_indexing(tree, pairs)
    seen = set()
    for leaf in range(tree.n_leaves):
        row = buf.nbr[leaf]
        tags = buf.tag[leaf]
        valid = row != SENTINEL
        assert np.all(valid[: valid.sum()])          # padding only at the end
        kinds = tags[valid] >> 5
        assert np.all(np.diff(kinds.astype(int)) >= 0)
        for s, tg in zip(row[valid].tolist(), tags[valid].tolist()):
            seen.add((leaf, s, tg >> 5, decode_shift(tg & 31, tree.dim)))
    expect = {(a, b, int(k), tuple(sh)) for a, b, k, sh in
              zip(pairs.target.tolist(), pairs.source.tolist(), pairs.kind.tolist(), pairs.shift.tolist())}
    assert seen == expect
    assert buf.kinds == tuple(sorted(set(pairs.kind.tolist())))
    assert vol.phases["collect"] == buf.nbytes()
    assert vol.phases["update"] == 8 * tree.dim * tree.n_particles


def test_indexing_closed_form():
    tree = build_uniform_tree(8 * 8 * 4, 3, 2)
    pairs, st = classify_interactions(tree)
    _, vol = pack_indexing(tree, pairs)
    t, leafs, m = 4, 64, st.max_e2 + 1
    assert vol.closed_form["transfer"] == 16 * leafs * (3 * t + 1 + m + 3 * t * m)


def test_redundant_records_self_contained(small_case):
    tree, pairs, _ = small_case
    rb, vol = pack_redundant(pairs, tree, batch_size=100)
    pos, m = tree.particles.positions, tree.particles.mass
    for r in range(0, len(pairs), 7):
        rec = rb.record(r)
        a, b = int(pairs.target[r]), int(pairs.source[r])
        assert (rec["target_leaf"], rec["source_leaf"]) == (a, b)
        ts = slice(tree.start[a], tree.start[a] + tree.count[a])
        ss = slice(tree.start[b], tree.start[b] + tree.count[b])
        assert np.array_equal(rec["targets"][:, :3], pos[ts])
        assert np.array_equal(rec["targets"][:, 3], m[ts])
        assert np.allclose(rec["sources"][:, :3], pos[ss] + pairs.shift[r])
        assert rb.sizes[r] == HEADER_BYTES + 32 * (tree.count[a] + tree.count[b])
    assert rb.n_batches == math.ceil(len(pairs) / 100)
    assert vol.phases["collect"] == rb.buf.nbytes == rb.sizes.sum()
    assert vol.closed_form["transfer"] == 8 * len(pairs) * (9 * tree.t + 1.5)


def test_redundant_record_too_big_names_pair():
    p = generate("uniform", 200, 3, 1)
    tree = build_adaptive_tree(p, 50)
    pairs, _ = classify_interactions(tree)
    with pytest.raises(ValueError, match=r"record for pair \(target=0, source=0, kind=local\)"):
        pack_redundant(pairs, tree, batch_cap=64)


def test_redundant_batch_size_validation(small_case):
    tree, pairs, _ = small_case
    with pytest.raises(ValueError):
        pack_redundant(pairs, tree, batch_size=0)


def test_pattern_table_copies_and_bytes():
    table, vol = pack_pattern_redundant(16, 3)
    assert table.copies.shape == (3, 16, 9, 16)
    assert table.copies.nbytes == 3 * 144 * 16 * 16
    assert np.array_equal(table.copies[0], table.copies[2])
    assert vol.phases["transfer"] == 3 * 144 * 256
    with pytest.raises(ValueError, match="power of 2"):
        pack_pattern_redundant(12, 2)
    with pytest.raises(ValueError):
        pack_pattern_redundant(16, 0)


def test_pattern_weights_zero_on_self_and_symmetric():
    w = pattern_weights(16)
    centre = 4
    assert np.all(np.diag(w[:, centre, :]) == 0)
    assert np.allclose(w[:, centre, :], w[:, centre, :].T)
    # the (+1, 0) pattern seen from the source equals the (-1, 0) pattern transposed
    assert np.allclose(w[:, 5, :], w[:, 3, :].T)


def test_dbim_transfer_volumes_match_closed_form():
    N, L = 65536, 5
    tree = build_uniform_tree(N, L, 2)
    nb = e2_neighbors(tree)
    vals = np.ones(N, dtype=complex)
    t1, _ = pack_pattern_redundant(64, 1)
    t2, _ = pack_pattern_redundant(64, 2)
    _, vb = pack_dbim(tree, nb, vals, t1, "base")
    _, vr = pack_dbim(tree, nb, vals, t2, "redundant")
    assert vb.phases["transfer"] == 48 * N
    assert vr.phases["transfer"] == 48 * N + 288 * 64 ** 2
    assert vb.phases["transfer"] / vr.phases["transfer"] == pytest.approx(0.727272727, abs=1e-9)


def test_dbim_needs_uniform_2d():
    tree = build_adaptive_tree(generate("uniform", 64, 2, 0), 4)
    table, _ = pack_pattern_redundant(4, 1)
    with pytest.raises(ValueError, match="uniform 2-D"):
        pack_dbim(tree, e2_neighbors(tree), np.ones(64), table, "base")


def test_kind_names_order():
    assert KIND_NAMES == ("local", "remote", "periodic")
