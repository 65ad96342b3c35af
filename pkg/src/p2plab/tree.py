"""Spatial decompositions: uniform 2^d-ary trees and adaptive binary trees."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .particles import ParticleSet

UNIFORM = "uniform"
ADAPTIVE = "adaptive"


class LeafBox(NamedTuple):
    box_id: int
    level: int
    particle_range: range
    center: tuple
    extent: tuple


@dataclass(frozen=True)
class Tree:
    """Leaf-level view of a tree.

    ``particles`` is the leaf-ordered particle array; leaf ``i`` owns
    ``particles[start[i]:start[i] + count[i]]``.  ``order[k]`` is the index in
    the caller's particle array of leaf-ordered particle ``k``.
    """

    mode: str
    dim: int
    levels: int
    t: int
    periodic: bool
    particles: ParticleSet
    order: np.ndarray
    start: np.ndarray
    count: np.ndarray
    centers: np.ndarray
    extents: np.ndarray
    leaf_level: np.ndarray
    grid: np.ndarray | None = None  # integer leaf coordinates, uniform mode only
    overfull: tuple = field(default=())  # (box_id, reason) for leaves above t

    @property
    def n_leaves(self) -> int:
        return int(self.start.shape[0])

    @property
    def n_particles(self) -> int:
        return len(self.particles)

    @property
    def leaves(self) -> list[LeafBox]:
        return [self.leaf(i) for i in range(self.n_leaves)]

    def leaf(self, i: int) -> LeafBox:
        s, c = int(self.start[i]), int(self.count[i])
        return LeafBox(i, int(self.leaf_level[i]), range(s, s + c),
                       tuple(self.centers[i]), tuple(self.extents[i]))

    def leaf_of_particle(self) -> np.ndarray:
        """Leaf id for every leaf-ordered particle."""
        return np.repeat(np.arange(self.n_leaves), self.count)


def _morton_order(n_side: int, dim: int) -> np.ndarray:
    """Grid coordinates of 2^d-ary tree leaves, listed in Z (Morton) order."""
    bits = max(int(n_side - 1).bit_length(), 1)
    codes = np.arange(n_side ** dim, dtype=np.int64)
    coords = np.zeros((codes.size, dim), dtype=np.int64)
    for b in range(bits):
        for a in range(dim):
            # axis 0 takes the lowest interleaved bit
            coords[:, a] |= ((codes >> (b * dim + a)) & 1) << b
    return coords


def build_uniform_tree(N: int, L: int, dim: int = 2, periodic: bool = False) -> Tree:
    """Uniform tree of ``2^(dim*L)`` boxes, each holding the same sample grid.

    Every box carries ``t = N / 2^(dim*L)`` samples laid out on a
    ``t^(1/dim)``-per-axis grid, which requires ``t`` to be a perfect power.
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if L < 0:
        raise ValueError(f"level must be >= 0, got {L}")
    n_boxes = 2 ** (dim * L)
    if N <= 0 or N % n_boxes:
        raise ValueError(
            f"N = {N} is not divisible by the leaf count {n_boxes} (N = (2^{dim})^L * t violated)")
    t = N // n_boxes
    side = round(t ** (1.0 / dim))
    if side ** dim != t:
        raise ValueError(
            f"samples per box t = {t} is not a perfect {'square' if dim == 2 else 'cube'}; "
            "samples must form a regular grid per box")

    n_side = 2 ** L
    grid = _morton_order(n_side, dim)
    h = 1.0 / n_side
    # sample offsets inside a box, row-major over the local grid
    local = np.stack(np.meshgrid(*([np.arange(side)] * dim), indexing="ij"), -1).reshape(-1, dim)
    local = local[:, ::-1]  # axis 0 fastest
    offsets = (local + 0.5) * (h / side)
    lo = grid * h
    pos = (lo[:, None, :] + offsets[None, :, :]).reshape(-1, dim)
    particles = ParticleSet.from_arrays(pos)

    start = np.arange(n_boxes, dtype=np.int64) * t
    count = np.full(n_boxes, t, dtype=np.int64)
    centers = lo + 0.5 * h
    extents = np.full((n_boxes, dim), 0.5 * h)
    return Tree(UNIFORM, dim, L, t, periodic, particles, np.arange(N), start, count,
                centers, extents, np.full(n_boxes, L), grid=grid)


def build_adaptive_tree(particles: ParticleSet, t: int, max_depth: int = 64,
                        periodic: bool = False) -> Tree:
    """Binary tree by recursive median split along the longest axis of the points.

    Leaves hold at most ``t`` particles.  A leaf that cannot be split (all its
    points coincide, or ``max_depth`` was reached) is kept over-full and listed
    in ``Tree.overfull``.
    """
    if t < 1:
        raise ValueError(f"clustering threshold must be >= 1, got {t}")
    n = len(particles)
    if n == 0:
        raise ValueError("cannot build a tree over zero particles")
    pos = particles.positions
    dim = particles.dim

    leaf_idx, lows, highs, depths, overfull = [], [], [], [], []
    stack = [(np.arange(n), np.zeros(dim), np.ones(dim), 0)]
    while stack:
        idx, lo, hi, depth = stack.pop()
        if idx.size <= t:
            reason = None
        elif depth >= max_depth:
            reason = "max_depth"
        else:
            p = pos[idx]
            span = p.max(axis=0) - p.min(axis=0)
            axis = int(np.argmax(span))
            if span[axis] == 0.0:
                reason = "coincident"
            else:
                srt = np.argsort(p[:, axis], kind="stable")
                k = idx.size // 2
                cut = 0.5 * (p[srt[k - 1], axis] + p[srt[k], axis])
                lhi, rlo = hi.copy(), lo.copy()
                lhi[axis] = cut
                rlo[axis] = cut
                # right pushed first so the left child is emitted first
                stack.append((idx[srt[k:]], rlo, hi, depth + 1))
                stack.append((idx[srt[:k]], lo, lhi, depth + 1))
                continue
        if reason is not None:
            overfull.append((len(leaf_idx), reason))
        leaf_idx.append(idx)
        lows.append(lo)
        highs.append(hi)
        depths.append(depth)

    count = np.array([a.size for a in leaf_idx], dtype=np.int64)
    start = np.concatenate([[0], np.cumsum(count)[:-1]]).astype(np.int64)
    order = np.concatenate(leaf_idx)
    lows, highs = np.array(lows), np.array(highs)
    return Tree(ADAPTIVE, dim, int(max(depths)), t, periodic, particles.take(order), order,
                start, count, 0.5 * (lows + highs), 0.5 * (highs - lows),
                np.array(depths), overfull=tuple(overfull))


def uniform_level_for(N: int, t: int, dim: int = 2) -> int:
    """Level L with N = 2^(dim*L) * t, or ValueError."""
    L = math.log(N / t, 2 ** dim)
    Li = round(L)
    if abs(L - Li) > 1e-9 or (2 ** (dim * Li)) * t != N:
        raise ValueError(f"N = {N} is not (2^{dim})^L * {t} for any integer L")
    return Li
