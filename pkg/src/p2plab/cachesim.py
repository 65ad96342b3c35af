"""Trace-driven locality measurement.

Per logical thread: dispersion D (maximal runs of consecutive cache lines among
the distinct lines touched) and volume V (distinct bytes).  A set-associative
LRU cache is driven by the threads' accesses, interleaved in lockstep groups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit, types
from numba.typed import Dict

from .kernels import DATA, INDEX, OUTPUT

FITS, SPILLS = "fits", "spills"


@dataclass(frozen=True)
class MemoryTrace:
    """Accesses in emission order: grouped by launch, then thread, then program order."""

    thread: np.ndarray
    launch: np.ndarray
    addr: np.ndarray
    size: np.ndarray
    tag: np.ndarray
    n_threads: int

    def __len__(self) -> int:
        return int(self.addr.size)

    def select(self, mask) -> "MemoryTrace":
        return MemoryTrace(self.thread[mask], self.launch[mask], self.addr[mask],
                           self.size[mask], self.tag[mask], self.n_threads)

    def without_index(self) -> "MemoryTrace":
        return self.select(self.tag != INDEX)

    def of_thread(self, i: int) -> "MemoryTrace":
        return self.select(self.thread == i)

    @classmethod
    def from_lists(cls, per_thread: list) -> "MemoryTrace":
        """Build from ``[[(addr, size), ...], ...]``, one list per thread, single launch."""
        thr, addr, size = [], [], []
        for i, acc in enumerate(per_thread):
            for a, s in acc:
                thr.append(i)
                addr.append(a)
                size.append(s)
        n = len(addr)
        return cls(np.array(thr, dtype=np.int64), np.zeros(n, dtype=np.int64),
                   np.array(addr, dtype=np.int64), np.array(size, dtype=np.int64),
                   np.full(n, DATA, dtype=np.int8), len(per_thread))


@dataclass(frozen=True)
class CacheConfig:
    capacity: int | None = 2 * 2**20   # bytes; None = unbounded
    line: int = 128
    ways: int | None = 16               # None = fully associative
    group: int = 32
    coalesce: bool = False

    def __post_init__(self):
        if self.line <= 0 or self.line & (self.line - 1):
            raise ValueError(f"line size must be a power of 2, got {self.line}")
        if self.group < 1:
            raise ValueError(f"group size must be >= 1, got {self.group}")
        if self.capacity is not None:
            if self.capacity <= 0 or self.capacity % self.line:
                raise ValueError(f"capacity {self.capacity} is not a whole number of {self.line}-byte lines")
            if self.ways is not None and (self.capacity // self.line) % self.ways:
                raise ValueError(f"{self.capacity // self.line} lines not divisible by associativity {self.ways}")

    @property
    def n_lines(self) -> int | None:
        return None if self.capacity is None else self.capacity // self.line

    @property
    def effective_ways(self) -> int:
        return self.n_lines if self.ways is None else self.ways


def _line_pairs(trace: MemoryTrace, B: int):
    first = trace.addr // B
    last = (trace.addr + trace.size - 1) // B
    n = last - first + 1
    thr = np.repeat(trace.thread, n)
    ends = np.cumsum(n)
    lines = np.repeat(first - (ends - n), n) + np.arange(int(ends[-1]) if n.size else 0)
    return thr, lines


def _distinct_lines(keys_thr, lines):
    if lines.size == 0:
        return keys_thr, lines
    o = np.lexsort((lines, keys_thr))
    t, l = keys_thr[o], lines[o]
    keep = np.ones(l.size, dtype=bool)
    keep[1:] = (t[1:] != t[:-1]) | (l[1:] != l[:-1])
    return t[keep], l[keep]


def dispersion(trace: MemoryTrace, B: int) -> np.ndarray:
    """Per-thread count of maximal runs of consecutive line ids."""
    if B <= 0 or B & (B - 1):
        raise ValueError(f"line size must be a power of 2, got {B}")
    D = np.zeros(trace.n_threads, dtype=np.int64)
    if len(trace) == 0:
        return D
    t, l = _distinct_lines(*_line_pairs(trace, B))
    new_run = np.ones(l.size, dtype=bool)
    new_run[1:] = (t[1:] != t[:-1]) | (l[1:] != l[:-1] + 1)
    np.add.at(D, t[new_run], 1)
    return D


@njit(cache=True)
def _union_lengths(thr, lo, hi, n_threads):
    out = np.zeros(n_threads, dtype=np.int64)
    cur_t = -1
    cur_hi = 0
    for k in range(thr.size):
        t = thr[k]
        if t != cur_t:
            cur_t = t
            cur_hi = lo[k]
        a = max(lo[k], cur_hi)
        if hi[k] > a:
            out[t] += hi[k] - a
        if hi[k] > cur_hi:
            cur_hi = hi[k]
    return out


def volume(trace: MemoryTrace) -> np.ndarray:
    """Per-thread size in bytes of the union of accessed intervals."""
    if len(trace) == 0:
        return np.zeros(trace.n_threads, dtype=np.int64)
    o = np.lexsort((trace.addr, trace.thread))
    lo = trace.addr[o]
    return _union_lengths(trace.thread[o], lo, lo + trace.size[o], trace.n_threads)


def group_footprint(trace: MemoryTrace, B: int, G: int) -> np.ndarray:
    """Bytes of distinct lines touched by each group of G consecutive threads."""
    n_groups = max(1, -(-trace.n_threads // G))
    fp = np.zeros(n_groups, dtype=np.int64)
    if len(trace) == 0:
        return fp
    thr, lines = _line_pairs(trace, B)
    g, _ = _distinct_lines(thr // G, lines)
    np.add.at(fp, g, B)
    return fp


@njit(cache=True)
def _simulate(seg_start, seg_end, seg_launch, seg_group, addr, size, B, n_sets, ways,
              unbounded, coalesce):
    tags = np.full((max(n_sets, 1), max(ways, 1)), -1, dtype=np.int64)
    stamp = np.zeros((max(n_sets, 1), max(ways, 1)), dtype=np.int64)
    seen = Dict.empty(key_type=types.int64, value_type=types.int64)
    step_lines = np.empty(4096, dtype=np.int64)
    clock = 0
    misses = 0
    hits = 0
    nseg = seg_start.size
    g0 = 0
    while g0 < nseg:
        # a lockstep group: threads of one launch sharing thread_id // G
        g1 = g0 + 1
        while g1 < nseg and seg_group[g1] == seg_group[g0] and seg_launch[g1] == seg_launch[g0]:
            g1 += 1
        longest = 0
        for s in range(g0, g1):
            if seg_end[s] - seg_start[s] > longest:
                longest = seg_end[s] - seg_start[s]
        for step in range(longest):
            n_step = 0
            for s in range(g0, g1):
                k = seg_start[s] + step
                if k >= seg_end[s]:
                    continue
                first = addr[k] // B
                last = (addr[k] + size[k] - 1) // B
                for line in range(first, last + 1):
                    if coalesce:
                        dup = False
                        for q in range(n_step):
                            if step_lines[q] == line:
                                dup = True
                                break
                        if dup:
                            continue
                        if n_step == step_lines.size:
                            grown = np.empty(2 * n_step, dtype=np.int64)
                            grown[:n_step] = step_lines
                            step_lines = grown
                        step_lines[n_step] = line
                        n_step += 1
                    clock += 1
                    if unbounded:
                        if line in seen:
                            hits += 1
                        else:
                            seen[line] = 1
                            misses += 1
                        continue
                    st = line % n_sets
                    victim = 0
                    found = False
                    for w in range(ways):
                        if tags[st, w] == line:
                            found = True
                            stamp[st, w] = clock
                            break
                        if tags[st, w] == -1:
                            victim = w
                            break
                        if stamp[st, w] < stamp[st, victim]:
                            victim = w
                    if found:
                        hits += 1
                    else:
                        misses += 1
                        tags[st, victim] = line
                        stamp[st, victim] = clock
        g0 = g1
    return misses, hits


def _segments(trace: MemoryTrace):
    n = len(trace)
    if n == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z, z, z
    change = np.ones(n, dtype=bool)
    change[1:] = (trace.thread[1:] != trace.thread[:-1]) | (trace.launch[1:] != trace.launch[:-1])
    starts = np.nonzero(change)[0].astype(np.int64)
    ends = np.append(starts[1:], n).astype(np.int64)
    return (starts, ends, trace.launch[starts].astype(np.int64),
            trace.thread[starts].astype(np.int64))


def simulate_cache(trace: MemoryTrace, config: CacheConfig) -> tuple[int, int]:
    """(misses, hits) counted per cache line touched by each access."""
    starts, ends, launches, threads = _segments(trace)
    if config.capacity is None:
        n_sets, ways, unbounded = 1, 1, True
    else:
        ways = config.effective_ways
        n_sets = config.n_lines // ways
        unbounded = False
    m, h = _simulate(starts, ends, launches, threads // config.group, trace.addr.astype(np.int64),
                     trace.size.astype(np.int64), config.line, n_sets, ways, unbounded,
                     config.coalesce)
    return int(m), int(h)


def line_accesses(trace: MemoryTrace, B: int) -> int:
    if len(trace) == 0:
        return 0
    return int(((trace.addr + trace.size - 1) // B - trace.addr // B + 1).sum())


def distinct_lines(trace: MemoryTrace, B: int) -> int:
    if len(trace) == 0:
        return 0
    first = trace.addr // B
    last = (trace.addr + trace.size - 1) // B
    n = last - first + 1
    ends = np.cumsum(n)
    lines = np.repeat(first - (ends - n), n) + np.arange(int(ends[-1]))
    return int(np.unique(lines).size)


def locality_speedup(D_base, V_base, D_rest, V_rest, C, footprint=None) -> tuple[float, str]:
    """Piecewise locality speedup of the restructured layout.

    Ratios are base over restructured.  If the restructured footprint (``V_rest``
    unless ``footprint`` is given) fits in C, the result is D' * V'; otherwise V' / D'.
    Returns ``(x_locality, regime)``.
    """
    if D_rest <= 0 or V_rest <= 0:
        raise ValueError("restructured dispersion and volume must be positive")
    if D_base <= 0 or V_base <= 0:
        raise ValueError("base dispersion and volume must be positive")
    d = D_base / D_rest
    v = V_base / V_rest
    fp = V_rest if footprint is None else footprint
    if C is None or fp <= C:
        return d * v, FITS
    return v / d, SPILLS


@dataclass
class LocalityReport:
    layout: str
    D: np.ndarray
    V: np.ndarray
    misses: int
    hits: int
    group_footprint: np.ndarray
    index_filtered: bool = False

    @property
    def mean_D(self) -> float:
        return float(self.D.mean()) if self.D.size else 0.0

    @property
    def max_D(self) -> int:
        return int(self.D.max()) if self.D.size else 0

    @property
    def mean_V(self) -> float:
        return float(self.V.mean()) if self.V.size else 0.0

    @property
    def max_V(self) -> int:
        return int(self.V.max()) if self.V.size else 0

    @property
    def accesses(self) -> int:
        return self.misses + self.hits

    @property
    def miss_rate(self) -> float:
        return self.misses / self.accesses if self.accesses else 0.0

    @property
    def max_group_footprint(self) -> int:
        return int(self.group_footprint.max()) if self.group_footprint.size else 0

    def row(self) -> dict:
        return {"layout": self.layout, "mean_D": self.mean_D, "max_D": self.max_D,
                "mean_V": self.mean_V, "max_V": self.max_V, "misses": self.misses,
                "hits": self.hits, "miss_rate": self.miss_rate}


def locality_report(trace: MemoryTrace, config: CacheConfig, layout: str,
                    filter_index: bool = False, simulate: bool = True) -> LocalityReport:
    tr = trace.without_index() if filter_index else trace
    D = dispersion(tr, config.line)
    V = volume(tr)
    fp = group_footprint(tr, config.line, config.group)
    m, h = simulate_cache(tr, config) if simulate else (0, 0)
    return LocalityReport(layout, D, V, m, h, fp, filter_index)


__all__ = ["MemoryTrace", "CacheConfig", "LocalityReport", "dispersion", "volume",
           "simulate_cache", "locality_speedup", "locality_report", "group_footprint",
           "line_accesses", "distinct_lines", "FITS", "SPILLS", "DATA", "INDEX", "OUTPUT"]
