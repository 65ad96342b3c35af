"""E2 (one-box) neighbourhoods and interaction classification."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from .tree import UNIFORM, Tree

LOCAL, REMOTE, PERIODIC = 0, 1, 2
KIND_NAMES = ("local", "remote", "periodic")

_TOUCH_TOL = 1e-12


@dataclass(frozen=True)
class NeighborLists:
    """CSR neighbour lists.

    Leaf ``i`` has sources ``src[ptr[i]:ptr[i+1]]``; ``shift`` holds the integer
    periodic image offset (in box lengths) added to the source position.
    """

    ptr: np.ndarray
    src: np.ndarray
    shift: np.ndarray
    include_self: bool

    @property
    def n_leaves(self) -> int:
        return self.ptr.size - 1

    def of(self, i: int) -> np.ndarray:
        return self.src[self.ptr[i]:self.ptr[i + 1]]

    def targets(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_leaves), np.diff(self.ptr))

    def counts(self) -> np.ndarray:
        return np.diff(self.ptr)


class InteractionPair(NamedTuple):
    target_leaf: int
    source_leaf: int
    kind: str


@dataclass(frozen=True)
class PairList:
    target: np.ndarray
    source: np.ndarray
    kind: np.ndarray
    shift: np.ndarray

    def __len__(self) -> int:
        return int(self.target.size)

    def __iter__(self):
        for a, b, k in zip(self.target.tolist(), self.source.tolist(), self.kind.tolist()):
            yield InteractionPair(a, b, KIND_NAMES[k])

    def kinds_present(self) -> list[int]:
        return sorted(set(np.unique(self.kind).tolist()))

    def select(self, mask) -> "PairList":
        return PairList(self.target[mask], self.source[mask], self.kind[mask], self.shift[mask])

    def take(self, order) -> "PairList":
        return self.select(np.asarray(order))


@dataclass(frozen=True)
class TreeStats:
    n_leaves: int
    n_interactions: dict
    avg_e2: float
    max_e2: int


def _csr(n, tgt, src, shift, dim, include_self):
    if include_self:
        tgt = np.concatenate([tgt, np.arange(n)])
        src = np.concatenate([src, np.arange(n)])
        shift = np.concatenate([shift, np.zeros((n, dim), dtype=np.int8)])
    o = np.lexsort((src, tgt))
    tgt, src, shift = tgt[o], src[o], shift[o]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, tgt + 1, 1)
    return NeighborLists(np.cumsum(ptr), src.astype(np.int64),
                         shift.astype(np.int8), include_self)


def _pick_shifts(n, i, j, s, dim):
    """Reduce candidate (i, j, shift) triples to one shift per unordered pair.

    Zero shift wins; otherwise the smallest |shift|.  The reverse pair gets the
    negated shift so pair forces stay antisymmetric.
    """
    flip = i > j
    a = np.where(flip, j, i)
    b = np.where(flip, i, j)
    s = np.where(flip[:, None], -s, s)
    key = np.abs(s).sum(axis=1)
    o = np.lexsort((key, b, a))
    a, b, s = a[o], b[o], s[o]
    first = np.ones(a.size, dtype=bool)
    first[1:] = (a[1:] != a[:-1]) | (b[1:] != b[:-1])
    a, b, s = a[first], b[first], s[first]
    tgt = np.concatenate([a, b])
    src = np.concatenate([b, a])
    sh = np.concatenate([s, -s]).astype(np.int8)
    return tgt, src, sh


def _uniform_candidates(tree: Tree):
    dim = tree.dim
    n_side = 2 ** tree.levels
    lookup = np.empty((n_side,) * dim, dtype=np.int64)
    lookup[tuple(tree.grid.T)] = np.arange(tree.n_leaves)
    tg, sg, shg = [], [], []
    for off in itertools.product((-1, 0, 1), repeat=dim):
        if not any(off):
            continue
        c = tree.grid + np.array(off)
        wrapped = np.floor_divide(c, n_side)
        if tree.periodic:
            keep = np.ones(tree.n_leaves, dtype=bool)
        else:
            keep = np.all(wrapped == 0, axis=1)
        c = np.mod(c[keep], n_side)
        tg.append(np.arange(tree.n_leaves)[keep])
        sg.append(lookup[tuple(c.T)])
        shg.append(wrapped[keep])
    i, j = np.concatenate(tg), np.concatenate(sg)
    s = np.concatenate(shg).reshape(-1, dim)
    notself = i != j
    return i[notself], j[notself], s[notself]


def _touch(lo_t, hi_t, lo_s, hi_s):
    return np.all((lo_t <= hi_s + _TOUCH_TOL) & (lo_s <= hi_t + _TOUCH_TOL), axis=1)


def _geometric_candidates(tree: Tree):
    c, e = tree.centers, tree.extents
    dim = tree.dim
    # a touching pair lies within 2e_i + e_j <= 3 max(e_i, e_j) (Chebyshev), so
    # the larger leaf of the pair always finds the smaller one
    radius = 3.0 * e.max(axis=1) * (1.0 + 1e-9) + 1e-12
    if tree.periodic:
        kd = cKDTree(np.mod(c, 1.0), boxsize=1.0)
    else:
        kd = cKDTree(c)
    hits = kd.query_ball_point(c, radius, p=np.inf)
    lens = np.fromiter((len(h) for h in hits), dtype=np.int64, count=len(hits))
    a = np.repeat(np.arange(tree.n_leaves), lens)
    b = np.fromiter(itertools.chain.from_iterable(hits), dtype=np.int64, count=int(lens.sum()))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    key = np.unique(lo * tree.n_leaves + hi)
    lo, hi = key // tree.n_leaves, key % tree.n_leaves
    i = np.concatenate([lo, hi])
    j = np.concatenate([hi, lo])
    notself = i != j
    i, j = i[notself], j[notself]

    # target box dilated by its own half-width on each side
    lo_t = c[i] - 2.0 * e[i]
    hi_t = c[i] + 2.0 * e[i]
    direct = _touch(lo_t, hi_t, c[j] - e[j], c[j] + e[j])
    s = np.zeros((i.size, dim), dtype=np.int64)
    ok = direct
    if tree.periodic:
        img = -np.round(c[j] - c[i]).astype(np.int64)
        wrapped = ~direct & np.any(img != 0, axis=1)
        cs = c[j] + img
        ok_wrapped = wrapped & _touch(lo_t, hi_t, cs - e[j], cs + e[j])
        s[ok_wrapped] = img[ok_wrapped]
        ok = direct | ok_wrapped
    return i[ok], j[ok], s[ok]


def e2_neighbors(tree: Tree, include_self: bool = True, geometric: bool | None = None) -> NeighborLists:
    """Neighbour lists of every leaf.

    Uniform trees use exact integer adjacency (the Moore neighbourhood).
    Adaptive trees use geometric adjacency: a source leaf is a neighbour when it
    touches the target box dilated by the target's half-width, closed under
    symmetry.  ``geometric=True`` forces the geometric rule on uniform trees.
    """
    if geometric is None:
        geometric = tree.mode != UNIFORM
    if geometric:
        i, j, s = _geometric_candidates(tree)
    else:
        i, j, s = _uniform_candidates(tree)
    tgt, src, sh = _pick_shifts(tree.n_leaves, i, j, s, tree.dim)
    return _csr(tree.n_leaves, tgt, src, sh, tree.dim, include_self)


def stripe_of(n_leaves: int, partitions: int) -> np.ndarray:
    """Synthetic sub-domain of each leaf: P contiguous stripes of the leaf order."""
    return np.arange(n_leaves) * partitions // n_leaves


def classify_interactions(tree: Tree, partitions: int = 1,
                          neighbors: NeighborLists | None = None) -> tuple[PairList, TreeStats]:
    if partitions < 1:
        raise ValueError(f"partitions must be >= 1, got {partitions}")
    if neighbors is None:
        neighbors = e2_neighbors(tree, include_self=True)
    tgt = neighbors.targets()
    src = neighbors.src
    shift = neighbors.shift
    stripe = stripe_of(tree.n_leaves, partitions)
    kind = np.where(stripe[tgt] != stripe[src], REMOTE, LOCAL)
    kind = np.where(np.any(shift != 0, axis=1), PERIODIC, kind).astype(np.int8)
    pairs = PairList(tgt, src, kind, shift)

    per_kind = {name: int(np.count_nonzero(kind == k)) for k, name in enumerate(KIND_NAMES)}
    per_kind["total"] = len(pairs)
    e2 = neighbors.counts() - (1 if neighbors.include_self else 0)
    stats = TreeStats(tree.n_leaves, per_kind, float(e2.mean()), int(e2.max()))
    return pairs, stats
