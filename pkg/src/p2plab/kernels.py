"""Compiled near-field kernels and their memory-trace twins.

Each ``*_launch`` kernel executes one launch over its logical threads.  Each
``*_trace`` function walks exactly the same loops and emits the byte accesses
the kernel performs instead of the arithmetic.
"""

import numpy as np
from numba import njit

SENT = np.uint32(2**32 - 1)
TAG_SENT = 255

# trace access tags
DATA, INDEX, OUTPUT = 0, 1, 2


@njit(cache=True)
def _shift_component(code, axis):
    for _ in range(axis):
        code //= 3
    return code % 3 - 1


@njit(cache=True)
def indexing_launch(soa, dim, leaf_of, ranges, nbr, tag, kind, eps2, out):
    """Thread per target particle; gathers neighbour data through indices."""
    n = soa.shape[1]
    m_col = dim
    width = nbr.shape[1]
    acc = np.zeros(3)
    for i in range(n):
        leaf = leaf_of[i]
        xi0 = soa[0, i]
        xi1 = soa[1, i]
        xi2 = soa[2, i] if dim == 3 else 0.0
        mi = soa[m_col, i]
        acc[0] = 0.0
        acc[1] = 0.0
        acc[2] = 0.0
        for e in range(width):
            s = nbr[leaf, e]
            if s == SENT:
                break
            tg = tag[leaf, e]
            k = tg >> 5
            if k < kind:
                continue
            if k > kind:
                break
            code = tg & 31
            sx = _shift_component(code, 0)
            sy = _shift_component(code, 1)
            sz = _shift_component(code, 2) if dim == 3 else 0
            st = ranges[s, 0]
            cnt = ranges[s, 1]
            for j in range(st, st + cnt):
                if j == i:
                    continue
                dx = soa[0, j] + sx - xi0
                dy = soa[1, j] + sy - xi1
                r2 = dx * dx + dy * dy + eps2
                if dim == 3:
                    dz = soa[2, j] + sz - xi2
                    r2 += dz * dz
                else:
                    dz = 0.0
                if r2 == 0.0:
                    return i
                f = mi * soa[m_col, j] / (r2 * np.sqrt(r2))
                acc[0] += f * dx
                acc[1] += f * dy
                acc[2] += f * dz
        for c in range(dim):
            out[c, i] += acc[c]
    return -1


@njit(cache=True)
def redundant_launch(f64, i32, offsets, slot_offset, dim, eps2, partials, lo, hi):
    """Thread per pair record; reads only its own contiguous record."""
    tw = dim + 1
    acc = np.zeros(3)
    for r in range(lo, hi):
        o4 = offsets[r] // 4
        tl = i32[o4]
        sl = i32[o4 + 1]
        nt = i32[o4 + 2]
        ns = i32[o4 + 3]
        base_t = offsets[r] // 8 + 2
        base_s = base_t + nt * tw
        same = tl == sl
        for a in range(nt):
            pa = base_t + a * tw
            xa0 = f64[pa]
            xa1 = f64[pa + 1]
            xa2 = f64[pa + 2] if dim == 3 else 0.0
            ma = f64[pa + dim]
            acc[0] = 0.0
            acc[1] = 0.0
            acc[2] = 0.0
            for b in range(ns):
                if same and a == b:
                    continue
                pb = base_s + b * tw
                dx = f64[pb] - xa0
                dy = f64[pb + 1] - xa1
                r2 = dx * dx + dy * dy + eps2
                if dim == 3:
                    dz = f64[pb + 2] - xa2
                    r2 += dz * dz
                else:
                    dz = 0.0
                if r2 == 0.0:
                    return r
                f = ma * f64[pb + dim] / (r2 * np.sqrt(r2))
                acc[0] += f * dx
                acc[1] += f * dy
                acc[2] += f * dz
            slot = slot_offset[r] + a
            for c in range(dim):
                partials[slot, c] = acc[c]
    return -1


@njit(cache=True)
def dbim_launch(unknowns, t, nbr, offc, table, rf, out):
    """Thread per target sample; shared pattern weights, copy chosen per box."""
    n = unknowns.shape[0]
    for i in range(n):
        leaf = i // t
        a = i - leaf * t
        cp = leaf % rf
        acc = 0.0 + 0.0j
        for e in range(9):
            s = nbr[leaf, e]
            if s == SENT:
                break
            o = offc[leaf, e]
            base = s * t
            for b in range(t):
                q = unknowns[base + b, 0] + 1j * unknowns[base + b, 1]
                acc += table[cp, a, o, b] * q
        out[i] = acc


# ---------------------------------------------------------------- traces

@njit(cache=True)
def indexing_trace(dim, n_hi, leaf_of, ranges, nbr, tag, kinds, bases, fill,
                   thr, launch, addr, size, atag):
    """Emit (or, with ``fill`` False, only count) the indexing kernel's accesses
    for threads ``0..n_hi-1``.

    ``bases``: field rows 0..dim, leaf_of, ranges, nbr, tag, out rows 0..dim-1.
    """
    width = nbr.shape[1]
    b_leaf = bases[dim + 1]
    b_rng = bases[dim + 2]
    b_nbr = bases[dim + 3]
    b_tag = bases[dim + 4]
    b_out = dim + 5
    p = 0
    for li in range(kinds.size):
        kind = kinds[li]
        for i in range(n_hi):
            if fill:
                thr[p] = i; launch[p] = li; addr[p] = b_leaf + 4 * i; size[p] = 4; atag[p] = INDEX
            p += 1
            leaf = leaf_of[i]
            for c in range(dim + 1):
                if fill:
                    thr[p] = i; launch[p] = li; addr[p] = bases[c] + 8 * i; size[p] = 8; atag[p] = DATA
                p += 1
            for e in range(width):
                if fill:
                    thr[p] = i; launch[p] = li; addr[p] = b_nbr + 4 * (leaf * width + e); size[p] = 4; atag[p] = INDEX
                p += 1
                s = nbr[leaf, e]
                if s == SENT:
                    break
                if fill:
                    thr[p] = i; launch[p] = li; addr[p] = b_tag + (leaf * width + e); size[p] = 1; atag[p] = INDEX
                p += 1
                k = tag[leaf, e] >> 5
                if k < kind:
                    continue
                if k > kind:
                    break
                if fill:
                    thr[p] = i; launch[p] = li; addr[p] = b_rng + 8 * s; size[p] = 8; atag[p] = INDEX
                p += 1
                st = ranges[s, 0]
                cnt = ranges[s, 1]
                for j in range(st, st + cnt):
                    if j == i:
                        continue
                    for c in range(dim + 1):
                        if fill:
                            thr[p] = i; launch[p] = li; addr[p] = bases[c] + 8 * j; size[p] = 8; atag[p] = DATA
                        p += 1
            for c in range(dim):
                if fill:
                    thr[p] = i; launch[p] = li; addr[p] = bases[b_out + c] + 8 * i; size[p] = 8; atag[p] = OUTPUT
                p += 1
    return p


@njit(cache=True)
def redundant_trace(dim, r_hi, i32, offsets, slot_offset, batches, b_buf, b_part, fill,
                    thr, launch, addr, size, atag):
    """Accesses of record threads ``0..r_hi-1``, launch by launch."""
    tw = dim + 1
    tb = 8 * tw
    p = 0
    for bi in range(batches.size - 1):
        for r in range(batches[bi], min(batches[bi + 1], r_hi)):
            o = offsets[r]
            for h in range(4):
                if fill:
                    thr[p] = r; launch[p] = bi; addr[p] = b_buf + o + 4 * h; size[p] = 4; atag[p] = INDEX
                p += 1
            tl = i32[o // 4]
            sl = i32[o // 4 + 1]
            nt = i32[o // 4 + 2]
            ns = i32[o // 4 + 3]
            t0 = b_buf + o + 16
            s0 = t0 + nt * tb
            for a in range(nt):
                if fill:
                    thr[p] = r; launch[p] = bi; addr[p] = t0 + a * tb; size[p] = tb; atag[p] = DATA
                p += 1
                for b in range(ns):
                    if tl == sl and a == b:
                        continue
                    if fill:
                        thr[p] = r; launch[p] = bi; addr[p] = s0 + b * tb; size[p] = tb; atag[p] = DATA
                    p += 1
                if fill:
                    thr[p] = r; launch[p] = bi; addr[p] = b_part + 8 * dim * (slot_offset[r] + a)
                    size[p] = 8 * dim; atag[p] = OUTPUT
                p += 1
    return p


@njit(cache=True)
def dbim_trace(n_hi, t, nbr, offc, rf, b_unk, b_nbr, b_off, b_table, b_out, fill,
               thr, launch, addr, size, atag):
    p = 0
    for i in range(n_hi):
        leaf = i // t
        a = i - leaf * t
        cp = leaf % rf
        for e in range(9):
            if fill:
                thr[p] = i; launch[p] = 0; addr[p] = b_nbr + 4 * (leaf * 9 + e); size[p] = 4; atag[p] = INDEX
            p += 1
            s = nbr[leaf, e]
            if s == SENT:
                break
            if fill:
                thr[p] = i; launch[p] = 0; addr[p] = b_off + leaf * 9 + e; size[p] = 1; atag[p] = INDEX
            p += 1
            oc = offc[leaf, e]
            for b in range(t):
                if fill:
                    o = b_table + 16 * (((cp * t + a) * 9 + oc) * t + b)
                    thr[p] = i; launch[p] = 0; addr[p] = o; size[p] = 16; atag[p] = DATA
                p += 1
                if fill:
                    thr[p] = i; launch[p] = 0; addr[p] = b_unk + 48 * (s * t + b); size[p] = 16; atag[p] = DATA
                p += 1
        if fill:
            thr[p] = i; launch[p] = 0; addr[p] = b_out + 16 * i; size[p] = 16; atag[p] = OUTPUT
        p += 1
    return p
