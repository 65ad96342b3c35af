"""Running the near-field operator under both layouts.

Logical threads: one per target particle (indexing) or one per pair record
(redundant).  Duplicated per-record results are reduced afterwards in a fixed
order.  Phase timing follows collect / transfer / compute / update.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cachesim import MemoryTrace
from .layouts import (DbimBuffers, IndexingBuffers, PairList, RedundantBuffers,
                      pack_indexing, pack_redundant)
from .tree import Tree

GRAVITY = "gravity"
PATTERN = "pattern_table"
PAGE = 4096


@dataclass(frozen=True)
class PairKernel:
    kind: str = GRAVITY
    softening: float = 1e-3

    def __post_init__(self):
        if self.kind not in (GRAVITY, PATTERN):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.softening < 0:
            raise ValueError("softening must be >= 0")

    @property
    def eps2(self) -> float:
        return self.softening * self.softening


@dataclass
class PartialResults:
    values: np.ndarray   # (slots, d)
    record: np.ndarray   # record index of each slot
    slot: np.ndarray     # position of the slot inside its record
    target: np.ndarray   # leaf-ordered particle each slot contributes to


@dataclass
class PhaseTimes:
    collect: float = 0.0
    transfer: float = 0.0
    compute: float = 0.0
    update: float = 0.0
    launches: int = 0
    transfer_bytes: int = 0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"collect": self.collect, "transfer": self.transfer,
                "compute": self.compute, "update": self.update}

    @property
    def total(self) -> float:
        return self.collect + self.transfer + self.compute + self.update


class AddressMap:
    """Page-aligned virtual placement of buffers for tracing."""

    def __init__(self):
        self.next = PAGE
        self.base = {}

    def place(self, name: str, nbytes: int) -> int:
        b = self.next
        self.base[name] = b
        self.next = b + -(-max(int(nbytes), 1) // PAGE) * PAGE + PAGE
        return b


def _check_coincident(positions: np.ndarray, kernel: PairKernel):
    if kernel.kind == GRAVITY and kernel.softening == 0.0:
        u = np.unique(positions, axis=0)
        if u.shape[0] != positions.shape[0]:
            raise ValueError("coincident particles with zero softening: gravity kernel is singular")


_EMPTY = (np.int64, np.int64, np.int64, np.int64, np.int8)


def _count(tracer, *args) -> int:
    return int(tracer(*args, False, *(np.zeros(0, dtype=dt) for dt in _EMPTY)))


def _fill(tracer, n, *args):
    out = [np.empty(n, dtype=dt) for dt in _EMPTY]
    tracer(*args, True, *out)
    return out


def _indexing_args(buf: IndexingBuffers, n_hi: int):
    d = buf.dim
    n = buf.n_particles
    amap = AddressMap()
    bases = [amap.place(f"field{c}", 8 * n) for c in range(d + 1)]
    bases += [amap.place("leaf_of", buf.leaf_of.nbytes), amap.place("ranges", buf.ranges.nbytes),
              amap.place("nbr", buf.nbr.nbytes), amap.place("tag", buf.tag.nbytes)]
    bases += [amap.place(f"out{c}", 8 * n) for c in range(d)]
    kinds = np.array(buf.kinds, dtype=np.int64)
    return (d, n_hi, buf.leaf_of, buf.ranges, buf.nbr, buf.tag, kinds,
            np.array(bases, dtype=np.int64)), amap


def _redundant_args(buf: RedundantBuffers, r_hi: int):
    amap = AddressMap()
    b_buf = amap.place("records", buf.buf.nbytes)
    b_part = amap.place("partials", 8 * buf.dim * buf.n_slots)
    return (buf.dim, r_hi, buf.i32(), buf.offsets, buf.slot_offset, buf.batches,
            b_buf, b_part), amap


def _dbim_args(buf: DbimBuffers, n_hi: int):
    amap = AddressMap()
    n = buf.unknowns.shape[0]
    b_unk = amap.place("unknowns", buf.unknowns.nbytes)
    b_nbr = amap.place("nbr", buf.nbr.nbytes)
    b_off = amap.place("offset", buf.offset.nbytes)
    b_tab = amap.place("table", buf.table.copies.nbytes)
    b_out = amap.place("out", 16 * n)
    return (n_hi, buf.t, buf.nbr, buf.offset, buf.rf, b_unk, b_nbr, b_off, b_tab, b_out), amap


def indexing_trace(buf: IndexingBuffers, n_hi: int | None = None) -> tuple[MemoryTrace, AddressMap]:
    """Accesses of target threads ``0..n_hi-1`` (all by default)."""
    n_hi = buf.n_particles if n_hi is None else int(n_hi)
    args, amap = _indexing_args(buf, n_hi)
    n = _count(kernels.indexing_trace, *args)
    return MemoryTrace(*_fill(kernels.indexing_trace, n, *args), n_hi), amap


def redundant_trace(buf: RedundantBuffers, r_hi: int | None = None) -> tuple[MemoryTrace, AddressMap]:
    """Accesses of record threads ``0..r_hi-1`` (all by default)."""
    r_hi = buf.n_records if r_hi is None else int(r_hi)
    args, amap = _redundant_args(buf, r_hi)
    n = _count(kernels.redundant_trace, *args)
    return MemoryTrace(*_fill(kernels.redundant_trace, n, *args), r_hi), amap


def dbim_trace(buf: DbimBuffers, n_hi: int | None = None) -> tuple[MemoryTrace, AddressMap]:
    n_hi = buf.unknowns.shape[0] if n_hi is None else int(n_hi)
    args, amap = _dbim_args(buf, n_hi)
    n = _count(kernels.dbim_trace, *args)
    return MemoryTrace(*_fill(kernels.dbim_trace, n, *args), n_hi), amap


def trace_counts(ib: IndexingBuffers, rb: RedundantBuffers, n_hi: int, r_hi: int) -> tuple[int, int]:
    return (_count(kernels.indexing_trace, *_indexing_args(ib, n_hi)[0]),
            _count(kernels.redundant_trace, *_redundant_args(rb, r_hi)[0]))


def trace_window(tree: Tree, ib: IndexingBuffers, rb: RedundantBuffers, limit: int):
    """Leaf window ``[0, k)`` whose indexing and redundant traces both fit in ``limit`` accesses.

    Returns ``(k, n_hi, r_hi)``; ``k == n_leaves`` means the traces are complete.
    Record threads are included when their target leaf lies in the window.
    """
    k = tree.n_leaves
    while True:
        n_hi = int(tree.start[k - 1] + tree.count[k - 1]) if k < tree.n_leaves else tree.n_particles
        r_hi = int(np.searchsorted(rb.target_leaf, k, side="left"))
        ci, cr = trace_counts(ib, rb, n_hi, r_hi)
        worst = max(ci, cr)
        if worst <= limit or k == 1:
            return k, n_hi, r_hi
        k = max(1, min(k - 1, int(k * 0.95 * limit / worst)))


def check_self_contained(trace: MemoryTrace, buf: RedundantBuffers, amap: AddressMap):
    """Abort if any record thread touches bytes outside its record or its output slots."""
    r = trace.thread
    lo = amap.base["records"] + buf.offsets[r]
    hi = lo + buf.sizes[r]
    in_rec = (trace.addr >= lo) & (trace.addr + trace.size <= hi)
    slot_b = 8 * buf.dim
    olo = amap.base["partials"] + slot_b * buf.slot_offset[r]
    ohi = olo + slot_b * buf.n_t[r]
    in_out = (trace.addr >= olo) & (trace.addr + trace.size <= ohi)
    bad = np.nonzero(~(in_rec | in_out))[0]
    if bad.size:
        k = int(bad[0])
        raise RuntimeError(
            f"record {int(r[k])} touched address {int(trace.addr[k])} outside its record "
            f"[{int(lo[k])}, {int(hi[k])}) and output slots")


def run_p2p_indexing(buf: IndexingBuffers, kernel: PairKernel = PairKernel(),
                     trace_on: bool = False):
    """Returns ``(forces (N, d), trace | None, PhaseTimes)``; one launch per kind present."""
    if kernel.kind != GRAVITY:
        raise ValueError("indexing P2P runs the gravity kernel; use run_dbim for pattern tables")
    _check_coincident(buf.soa[:buf.dim].T, kernel)
    n = buf.n_particles
    out = np.zeros((buf.dim, n))
    t0 = time.perf_counter()
    for kind in buf.kinds:
        bad = kernels.indexing_launch(buf.soa, buf.dim, buf.leaf_of, buf.ranges, buf.nbr,
                                      buf.tag, kind, kernel.eps2, out)
        if bad >= 0:
            raise ValueError(f"zero separation at particle {bad} with zero softening")
    times = PhaseTimes(compute=time.perf_counter() - t0, launches=len(buf.kinds))
    trace = indexing_trace(buf)[0] if trace_on else None
    return np.ascontiguousarray(out.T), trace, times


def run_p2p_redundant(buf: RedundantBuffers, kernel: PairKernel = PairKernel(),
                      trace_on: bool = False):
    """Returns ``(PartialResults, trace | None, PhaseTimes)``; one launch per batch."""
    if kernel.kind != GRAVITY:
        raise ValueError("redundant P2P runs the gravity kernel")
    f64, i32 = buf.f64(), buf.i32()
    partials = np.zeros((buf.n_slots, buf.dim))
    t0 = time.perf_counter()
    for b in range(buf.n_batches):
        bad = kernels.redundant_launch(f64, i32, buf.offsets, buf.slot_offset, buf.dim,
                                       kernel.eps2, partials, buf.batches[b], buf.batches[b + 1])
        if bad >= 0:
            raise ValueError(f"zero separation in record {bad} with zero softening")
    times = PhaseTimes(compute=time.perf_counter() - t0, launches=buf.n_batches)
    record = np.repeat(np.arange(buf.n_records), buf.n_t)
    slot = np.arange(buf.n_slots) - np.repeat(buf.slot_offset, buf.n_t)
    res = PartialResults(partials, record, slot, buf.slot_target.copy())
    trace = None
    if trace_on:
        trace, amap = redundant_trace(buf)
        check_self_contained(trace, buf, amap)
    return res, trace, times


def reduce_partials(partials: PartialResults, n_targets: int) -> np.ndarray:
    """Sum slots per target in ascending (record, slot) order."""
    tgt = np.asarray(partials.target)
    if tgt.size and (tgt.min() < 0 or tgt.max() >= n_targets):
        bad = int(np.nonzero((tgt < 0) | (tgt >= n_targets))[0][0])
        raise ValueError(f"slot {bad} maps to target {int(tgt[bad])}, outside [0, {n_targets})")
    vals = np.asarray(partials.values)
    d = vals.shape[1] if vals.ndim == 2 else 1
    out = np.zeros((n_targets, d))
    if tgt.size == 0:
        return out
    o = np.lexsort((partials.slot, partials.record))
    tgt, vals = tgt[o], vals.reshape(-1, d)[o]
    for c in range(d):
        out[:, c] = np.bincount(tgt, weights=vals[:, c], minlength=n_targets)
    return out


def brute_force_oracle(tree: Tree, pairs: PairList, kernel: PairKernel = PairKernel()) -> np.ndarray:
    """Direct double loop over each pair's particles, from the tree alone."""
    pos = tree.particles.positions
    m = tree.particles.mass
    out = np.zeros_like(pos)
    eps2 = kernel.eps2
    for a, b, sh in zip(pairs.target.tolist(), pairs.source.tolist(), pairs.shift.tolist()):
        ti = np.arange(tree.start[a], tree.start[a] + tree.count[a])
        si = np.arange(tree.start[b], tree.start[b] + tree.count[b])
        d = pos[si][None, :, :] + np.asarray(sh, dtype=float) - pos[ti][:, None, :]
        r2 = (d * d).sum(-1) + eps2
        w = np.zeros_like(r2)
        mask = ti[:, None] != si[None, :]
        if np.any(r2[mask] == 0.0):
            raise ValueError("zero separation with zero softening")
        w[mask] = (m[ti][:, None] * m[si][None, :])[mask] / (r2[mask] * np.sqrt(r2[mask]))
        out[ti] += (w[:, :, None] * d).sum(axis=1)
    return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a - b| / max |b| (zero when both vanish)."""
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    diff = float(np.max(np.abs(a - b))) if a.size else 0.0
    if scale == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / scale


def run_dbim(buf: DbimBuffers) -> tuple[np.ndarray, PhaseTimes]:
    n = buf.unknowns.shape[0]
    out = np.zeros(n, dtype=np.complex128)
    t0 = time.perf_counter()
    kernels.dbim_launch(buf.unknowns, buf.t, buf.nbr, buf.offset, buf.table.copies, buf.rf, out)
    return out, PhaseTimes(compute=time.perf_counter() - t0, launches=1)


def dbim_oracle(tree: Tree, neighbors, values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Field per sample from the (t, 9, t) pattern, looping over neighbour boxes."""
    t = tree.t
    out = np.zeros(tree.n_particles, dtype=np.complex128)
    for leaf in range(tree.n_leaves):
        acc = np.zeros(t, dtype=np.complex128)
        lo = neighbors.ptr[leaf]
        for e, s in enumerate(neighbors.of(leaf).tolist()):
            sh = neighbors.shift[lo + e].astype(np.int64) * 2 ** tree.levels
            ox, oy = (tree.grid[s] + sh - tree.grid[leaf]).tolist()
            acc += weights[:, (oy + 1) * 3 + (ox + 1), :] @ values[s * t:(s + 1) * t]
        out[leaf * t:(leaf + 1) * t] = acc
    return out


# ---------------------------------------------------------------- timing

def _median_times(samples: list[PhaseTimes]) -> PhaseTimes:
    out = PhaseTimes(launches=samples[0].launches, transfer_bytes=samples[0].transfer_bytes)
    for ph in ("collect", "transfer", "compute", "update"):
        setattr(out, ph, statistics.median(getattr(s, ph) for s in samples))
    return out


def _copy_all(arrays) -> list:
    return [np.array(a, copy=True) for a in arrays]


def _phases_indexing(tree, pairs, kernel):
    t0 = time.perf_counter()
    buf, vol = pack_indexing(tree, pairs)
    t1 = time.perf_counter()
    dev = _copy_all(buf.arrays().values())
    t2 = time.perf_counter()
    forces, _, kt = run_p2p_indexing(buf, kernel)
    t3 = time.perf_counter()
    host = np.array(forces, copy=True)
    t4 = time.perf_counter()
    scattered = np.empty_like(host)
    scattered[tree.order] = host
    t5 = time.perf_counter()
    del dev
    return PhaseTimes(collect=t1 - t0, transfer=(t2 - t1) + (t4 - t3), compute=kt.compute,
                      update=t5 - t4, launches=kt.launches,
                      transfer_bytes=vol.phases["transfer"]), scattered, vol


def _phases_redundant(tree, pairs, kernel, batch_size):
    t0 = time.perf_counter()
    buf, vol = pack_redundant(pairs, tree, batch_size)
    t1 = time.perf_counter()
    dev = _copy_all([buf.buf])
    t2 = time.perf_counter()
    parts, _, kt = run_p2p_redundant(buf, kernel)
    t3 = time.perf_counter()
    parts.values = np.array(parts.values, copy=True)
    t4 = time.perf_counter()
    forces = reduce_partials(parts, tree.n_particles)
    scattered = np.empty_like(forces)
    scattered[tree.order] = forces
    t5 = time.perf_counter()
    del dev
    return PhaseTimes(collect=t1 - t0, transfer=(t2 - t1) + (t4 - t3), compute=kt.compute,
                      update=t5 - t4, launches=kt.launches,
                      transfer_bytes=vol.phases["transfer"]), scattered, vol


def measure_phases(layout: str, tree: Tree, pairs: PairList, kernel: PairKernel = PairKernel(),
                   batch_size: int = 20000, repetitions: int = 5):
    """Median phase times over ``repetitions`` runs after one discarded warm-up.

    Returns ``(PhaseTimes, forces in caller order, VolumeReport)``.
    """
    if layout == "indexing":
        run = lambda: _phases_indexing(tree, pairs, kernel)  # noqa: E731
    elif layout == "redundant":
        run = lambda: _phases_redundant(tree, pairs, kernel, batch_size)  # noqa: E731
    else:
        raise ValueError(f"unknown layout {layout!r}")
    if len(pairs) == 0:
        vol = run()[2]
        return (PhaseTimes(transfer_bytes=vol.phases["transfer"]),
                np.zeros((tree.n_particles, tree.dim)), vol)
    run()
    samples, forces, vol = [], None, None
    for _ in range(max(1, repetitions)):
        pt, forces, vol = run()
        samples.append(pt)
    return _median_times(samples), forces, vol
