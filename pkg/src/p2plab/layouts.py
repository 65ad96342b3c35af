"""Packed data layouts for the near-field operator and their byte accounting.

Indexing layout: struct-of-arrays particle fields plus per-leaf neighbour index
lists padded to the widest row.  Redundant layout: one self-contained
array-of-structures record per interaction pair.  DBIM layout: a uniform-tree
sample array plus RF copies of the shared interaction pattern table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .neighbors import KIND_NAMES, NeighborLists, PairList
from .tree import Tree

SENTINEL = np.uint32(2**32 - 1)
TAG_SENTINEL = np.uint8(255)
HEADER_BYTES = 16
DEFAULT_BATCH_CAP = 64 * 2**20
DBIM_TUPLE_BYTES = 48
PHASES = ("collect", "transfer", "compute", "update")


@dataclass
class VolumeReport:
    layout: str
    phases: dict
    parts: dict = field(default_factory=dict)
    closed_form: dict = field(default_factory=dict)

    def rows(self):
        return [(p, self.layout, int(self.phases[p])) for p in PHASES]


def _ranges(starts, counts):
    """Concatenation of ``arange(s, s + c)`` over paired starts/counts."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    ends = np.cumsum(counts)
    base = np.repeat(np.asarray(starts, dtype=np.int64) - (ends - counts), counts)
    return base + np.arange(total)


def shift_code(shift: np.ndarray) -> np.ndarray:
    """Base-3 code of a {-1,0,1}^d image shift (0..26)."""
    s = np.asarray(shift, dtype=np.int64) + 1
    code = np.zeros(s.shape[0], dtype=np.int64)
    for a in range(s.shape[1] - 1, -1, -1):
        code = code * 3 + s[:, a]
    return code


def decode_shift(code: int, dim: int) -> tuple:
    out = []
    for _ in range(dim):
        out.append(code % 3 - 1)
        code //= 3
    return tuple(out)


# ---------------------------------------------------------------- indexing

@dataclass(frozen=True)
class IndexingBuffers:
    soa: np.ndarray          # (d+1, N) float64 rows: x, y[, z], mass
    leaf_of: np.ndarray      # (N,) uint32
    ranges: np.ndarray       # (leaves, 2) uint32: start, count
    nbr: np.ndarray          # (leaves, max_e2) uint32, SENTINEL padded
    tag: np.ndarray          # (leaves, max_e2) uint8: kind << 5 | shift code
    dim: int
    kinds: tuple

    @property
    def n_particles(self) -> int:
        return self.soa.shape[1]

    @property
    def max_e2(self) -> int:
        return self.nbr.shape[1]

    def arrays(self) -> dict:
        return {"soa": self.soa, "leaf_of": self.leaf_of, "ranges": self.ranges,
                "nbr": self.nbr, "tag": self.tag}

    def nbytes(self) -> int:
        return sum(a.nbytes for a in self.arrays().values())


def pack_indexing(tree: Tree, pairs: PairList) -> tuple[IndexingBuffers, VolumeReport]:
    """Pack the SoA layout.  Rows of the neighbour table are grouped by kind."""
    p = tree.particles
    d = tree.dim
    n = len(p)
    soa = np.empty((d + 1, n))
    soa[:d] = p.positions.T
    soa[d] = p.mass
    leaf_of = tree.leaf_of_particle().astype(np.uint32)
    ranges = np.stack([tree.start, tree.count], axis=1).astype(np.uint32)

    nl = tree.n_leaves
    order = np.lexsort((pairs.source, pairs.kind, pairs.target))
    tgt, src = pairs.target[order], pairs.source[order]
    kind, code = pairs.kind[order], shift_code(pairs.shift[order])
    row_len = np.bincount(tgt, minlength=nl)
    max_e2 = int(row_len.max()) if row_len.size and len(pairs) else 0
    nbr = np.full((nl, max_e2), SENTINEL, dtype=np.uint32)
    tag = np.full((nl, max_e2), TAG_SENTINEL, dtype=np.uint8)
    if len(pairs):
        row_start = np.concatenate([[0], np.cumsum(row_len)[:-1]])
        col = np.arange(tgt.size) - row_start[tgt]
        nbr[tgt, col] = src
        tag[tgt, col] = (kind.astype(np.int64) << 5 | code).astype(np.uint8)
    buf = IndexingBuffers(soa, leaf_of, ranges, nbr, tag, d, tuple(pairs.kinds_present()))

    packed = buf.nbytes()
    out = d * 8 * n
    parts = {name: int(a.nbytes) for name, a in buf.arrays().items()}
    parts["particle_fields"] = parts["soa"]
    parts["padding_entries"] = int(nl * max_e2 - len(pairs))
    vol = VolumeReport("indexing", {
        "collect": packed,
        "transfer": packed + out,
        "compute": packed + out,
        "update": out,
    }, parts)
    t = tree.t
    vol.closed_form["transfer"] = 16.0 * nl * (3 * t + 1 + max_e2 + 3 * t * max_e2)
    return buf, vol


# ---------------------------------------------------------------- redundant

@dataclass(frozen=True)
class RedundantBuffers:
    buf: np.ndarray          # uint8, concatenated records
    offsets: np.ndarray      # byte offset of each record
    sizes: np.ndarray        # byte size of each record
    target_leaf: np.ndarray
    source_leaf: np.ndarray
    n_t: np.ndarray
    n_s: np.ndarray
    slot_offset: np.ndarray  # first output slot of each record
    slot_target: np.ndarray  # leaf-ordered particle index of each output slot
    batches: np.ndarray      # record index where each batch starts, plus end sentinel
    dim: int
    n_particles: int

    @property
    def n_records(self) -> int:
        return int(self.offsets.size)

    @property
    def n_batches(self) -> int:
        return int(self.batches.size - 1)

    @property
    def n_slots(self) -> int:
        return int(self.slot_target.size)

    def f64(self) -> np.ndarray:
        return self.buf.view(np.float64)

    def i32(self) -> np.ndarray:
        return self.buf.view(np.int32)

    def record(self, r: int) -> dict:
        """Decode record ``r`` from its own bytes only."""
        o = int(self.offsets[r])
        hdr = self.buf[o:o + HEADER_BYTES].view(np.int32)
        nt, ns = int(hdr[2]), int(hdr[3])
        tb = self.dim + 1
        body = self.buf[o + HEADER_BYTES:o + int(self.sizes[r])].view(np.float64)
        tup = body.reshape(nt + ns, tb)
        return {"target_leaf": int(hdr[0]), "source_leaf": int(hdr[1]),
                "targets": tup[:nt], "sources": tup[nt:]}


def tuple_bytes(dim: int) -> int:
    return 8 * (dim + 1)


def pack_redundant(pairs: PairList, tree: Tree, batch_size: int = 20000,
                   batch_cap: int = DEFAULT_BATCH_CAP) -> tuple[RedundantBuffers, VolumeReport]:
    """One record per pair: 16-byte header then target and source tuples.

    Source tuples of periodic pairs are stored already shifted to the image
    adjacent to the target.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    d = tree.dim
    tb = tuple_bytes(d)
    tw = d + 1
    p = tree.particles
    nt = tree.count[pairs.target].astype(np.int64)
    ns = tree.count[pairs.source].astype(np.int64)
    sizes = HEADER_BYTES + (nt + ns) * tb
    too_big = np.nonzero(sizes > batch_cap)[0]
    if too_big.size:
        r = int(too_big[0])
        raise ValueError(
            f"record for pair (target={int(pairs.target[r])}, source={int(pairs.source[r])}, "
            f"kind={KIND_NAMES[int(pairs.kind[r])]}) needs {int(sizes[r])} bytes, "
            f"above the per-batch cap of {batch_cap}")
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    total = int(sizes.sum())
    buf = np.zeros(total, dtype=np.uint8)
    i32 = buf.view(np.int32)
    f64 = buf.view(np.float64)

    h = offsets // 4
    i32[h] = pairs.target
    i32[h + 1] = pairs.source
    i32[h + 2] = nt
    i32[h + 3] = ns

    tuples = np.empty((len(p), tw))
    tuples[:, :d] = p.positions
    tuples[:, d] = p.mass
    # target tuples
    tslots = _ranges((offsets + HEADER_BYTES) // 8, nt * tw)
    tidx = _ranges(tree.start[pairs.target], nt)
    f64[tslots] = tuples[tidx].ravel()
    # source tuples, shifted to the periodic image
    sslots = _ranges((offsets + HEADER_BYTES) // 8 + nt * tw, ns * tw)
    sidx = _ranges(tree.start[pairs.source], ns)
    src = tuples[sidx]
    src[:, :d] += np.repeat(pairs.shift.astype(np.float64), ns, axis=0)
    f64[sslots] = src.ravel()

    slot_offset = np.concatenate([[0], np.cumsum(nt)[:-1]]).astype(np.int64)
    slot_target = tidx
    n_rec = len(pairs)
    batches = np.append(np.arange(0, n_rec, batch_size), n_rec).astype(np.int64)
    if n_rec == 0:
        batches = np.zeros(1, dtype=np.int64)
    rb = RedundantBuffers(buf, offsets, sizes, pairs.target.copy(), pairs.source.copy(),
                          nt, ns, slot_offset, slot_target, batches, d, len(p))

    out = int(nt.sum()) * d * 8
    forces = len(p) * d * 8
    vol = VolumeReport("redundant", {
        "collect": total,
        "transfer": total + out,
        "compute": total + out,
        "update": out + forces,
    }, {"records": total, "partials": out, "headers": n_rec * HEADER_BYTES})
    t = tree.t
    vol.closed_form["transfer"] = 8.0 * n_rec * (9 * t + 1.5)
    return rb, vol


def unpack_redundant_tuples(rb: RedundantBuffers, r: int):
    rec = rb.record(r)
    return rec["targets"], rec["sources"]


# ---------------------------------------------------------------- DBIM

@dataclass(frozen=True)
class PatternTable:
    """``copies[c, a, o, b]``: weight from source sample b of neighbour offset o
    onto target sample a, repeated over ``rf`` identical copies."""

    copies: np.ndarray
    t: int
    rf: int

    @property
    def nbytes_one(self) -> int:
        return 144 * self.t * self.t


def pattern_weights(t: int, wavenumber: float = 2.0 * np.pi) -> np.ndarray:
    """(t, 9, t) complex weights on a sqrt(t) x sqrt(t) sample grid, box side = 1.

    Weight exp(i k r) / r between samples at distance r; zero at r = 0.
    """
    side = round(t ** 0.5)
    if side * side != t:
        raise ValueError(f"t = {t} is not a perfect square")
    g = (np.stack(np.meshgrid(np.arange(side), np.arange(side), indexing="ij"), -1)
         .reshape(-1, 2)[:, ::-1] + 0.5) / side
    offs = np.array([(ox, oy) for oy in (-1, 0, 1) for ox in (-1, 0, 1)], dtype=float)
    src = offs[:, None, :] + g[None, :, :]                # (9, t, 2)
    diff = src[None, :, :, :] - g[:, None, None, :]       # (t, 9, t, 2)
    r = np.sqrt((diff ** 2).sum(-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(r > 0, np.exp(1j * wavenumber * r) / r, 0.0)
    return w.astype(np.complex128)


def pack_pattern_redundant(t: int, rf: int, wavenumber: float = 2.0 * np.pi) -> tuple[PatternTable, VolumeReport]:
    if rf < 1:
        raise ValueError(f"rf must be >= 1, got {rf}")
    if t < 1 or t & (t - 1):
        raise ValueError(f"t must be a power of 2, got {t}")
    w = pattern_weights(t, wavenumber)
    copies = np.ascontiguousarray(np.broadcast_to(w, (rf,) + w.shape))
    table = PatternTable(copies, t, rf)
    nbytes = int(copies.nbytes)
    vol = VolumeReport("pattern", {p: nbytes for p in PHASES}, {"pattern_copies": nbytes})
    return table, vol


@dataclass(frozen=True)
class DbimBuffers:
    unknowns: np.ndarray     # (N, 6) float64: value re, im, x, y, aux0, aux1
    nbr: np.ndarray          # (leaves, 9) uint32, SENTINEL padded
    offset: np.ndarray       # (leaves, 9) uint8 neighbour offset code 0..8
    table: PatternTable
    t: int

    @property
    def rf(self) -> int:
        return self.table.rf


def dbim_offset_code(off) -> int:
    ox, oy = off
    return (oy + 1) * 3 + (ox + 1)


def pack_dbim(tree: Tree, neighbors: NeighborLists, values: np.ndarray,
              table: PatternTable, layout: str) -> tuple[DbimBuffers, VolumeReport]:
    """Uniform 2-D tree samples as 48-byte unknowns plus neighbour offsets.

    ``layout='base'`` keeps the single resident pattern copy out of the
    per-call transfer; ``layout='redundant'`` transfers all ``rf`` copies.
    """
    if tree.mode != "uniform" or tree.dim != 2:
        raise ValueError("DBIM layout needs a uniform 2-D tree")
    if table.t != tree.t:
        raise ValueError(f"pattern table built for t={table.t}, tree has t={tree.t}")
    n = tree.n_particles
    u = np.zeros((n, 6))
    u[:, 0] = values.real
    u[:, 1] = values.imag
    u[:, 2:4] = tree.particles.positions
    nl = tree.n_leaves
    nbr = np.full((nl, 9), SENTINEL, dtype=np.uint32)
    offc = np.full((nl, 9), TAG_SENTINEL, dtype=np.uint8)
    tgt = neighbors.targets()
    rel = (tree.grid[neighbors.src] + neighbors.shift[:, :2].astype(np.int64) * 2 ** tree.levels
           - tree.grid[tgt])
    code = (rel[:, 1] + 1) * 3 + (rel[:, 0] + 1)
    col = np.arange(tgt.size) - neighbors.ptr[tgt]
    nbr[tgt, col] = neighbors.src
    offc[tgt, col] = code
    buf = DbimBuffers(u, nbr, offc, table, tree.t)
    tbytes = DBIM_TUPLE_BYTES * n
    table_bytes = table.copies.nbytes
    out = 16 * n
    transfer = tbytes if layout == "base" else tbytes + table_bytes
    vol = VolumeReport(layout, {
        "collect": transfer,
        "transfer": transfer,
        "compute": tbytes + table_bytes + nbr.nbytes + offc.nbytes + out,
        "update": 0,
    }, {"unknowns": tbytes, "pattern": int(table_bytes)})
    return buf, vol
