"""Sweep runners behind the CLI verbs: tree statistics, layout runs,
predictions, comparisons and share fits.  Every function returns rows as
dicts; CSV writing lives in :mod:`p2plab.report`.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import execution as ex
from . import model
from .cachesim import CacheConfig, LocalityReport, locality_report
from .config import ExperimentConfig
from .layouts import (pack_dbim, pack_indexing, pack_pattern_redundant, pack_redundant)
from .neighbors import LOCAL, PairList, TreeStats, classify_interactions, e2_neighbors
from .particles import generate, jitter
from .tree import Tree, build_adaptive_tree, build_uniform_tree

LAYOUTS = ("indexing", "redundant")
DBIM_LAYOUTS = ("base", "redundant")
TIMING_COLUMNS = ("collect_s", "transfer_s", "compute_s", "update_s", "seconds")


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def photons_particles(cfg: ExperimentConfig, seed: int):
    return generate(cfg.generator, cfg.N, cfg.dim, seed)


# ---------------------------------------------------------------- tree-stats

def tree_stats_rows(cfg: ExperimentConfig) -> list:
    rows = []
    for seed in cfg.seeds:
        if cfg.mode == "photons":
            p = photons_particles(cfg, seed)
            for t in cfg.t:
                tree = build_adaptive_tree(p, t, periodic=cfg.periodic)
                _, st = classify_interactions(tree, cfg.partitions)
                rows.append(_stats_row(cfg, 0, t, tree, st, seed))
        else:
            for L, t in cfg.sweep():
                tree = build_uniform_tree(cfg.N, L, 2)
                _, st = classify_interactions(tree, cfg.partitions)
                rows.append(_stats_row(cfg, L, t, tree, st, seed))
    return rows


def _stats_row(cfg, L, t, tree: Tree, st: TreeStats, seed) -> dict:
    n = st.n_interactions
    return {"mode": cfg.mode, "N": cfg.N, "L": L, "t": t, "leafs": st.n_leaves,
            "interactions": n["total"], "local": n["local"], "remote": n["remote"],
            "periodic": n["periodic"], "avg_e2": st.avg_e2, "max_e2": st.max_e2,
            "overfull": len(tree.overfull), "seed": seed}


# ---------------------------------------------------------------- run

@dataclass
class PhotonsPoint:
    """Structure and locality of one (t, seed) point; no timing."""

    tree: Tree
    pairs: PairList
    stats: TreeStats
    reports: dict
    launches: dict
    window: float
    volumes: dict
    share_local: float


def local_pair_share(tree: Tree, pairs: PairList) -> float:
    """Fraction of particle-particle interactions that are local."""
    w = tree.count[pairs.target].astype(np.float64) * tree.count[pairs.source]
    tot = w.sum()
    return float(w[pairs.kind == LOCAL].sum() / tot) if tot else 1.0


def photons_point(cfg: ExperimentConfig, particles, t: int, locality: bool = True,
                  cache: CacheConfig | None = None) -> PhotonsPoint:
    tree = build_adaptive_tree(particles, t, periodic=cfg.periodic)
    pairs, st = classify_interactions(tree, cfg.partitions)
    ib, vi = pack_indexing(tree, pairs)
    rb, vr = pack_redundant(pairs, tree, cfg.batch_size)
    reports = {}
    frac = 1.0
    if locality:
        k, n_hi, r_hi = ex.trace_window(tree, ib, rb, cfg.trace_limit)
        frac = k / tree.n_leaves
        cache = cache or cfg.cache
        reports["indexing"] = locality_report(ex.indexing_trace(ib, n_hi)[0], cache, "indexing")
        reports["redundant"] = locality_report(ex.redundant_trace(rb, r_hi)[0], cache, "redundant")
    launches = {"indexing": len(ib.kinds), "redundant": rb.n_batches}
    return PhotonsPoint(tree, pairs, st, reports, launches, frac,
                        {"indexing": vi, "redundant": vr}, local_pair_share(tree, pairs))


def locality_inputs(cfg: ExperimentConfig, rep_base: LocalityReport,
                    rep_rest: LocalityReport) -> model.LocalityInputs:
    return model.LocalityInputs(rep_base.mean_D, rep_base.mean_V, rep_rest.mean_D,
                                rep_rest.mean_V, cfg.cache.capacity,
                                rep_rest.max_group_footprint, cfg.calibration, cfg.regime)


def run_photons(cfg: ExperimentConfig, progress=None) -> dict:
    """Rows for phases, volumes, locality and the joined experiment table."""
    out = {"phases": [], "volumes": [], "locality": [], "experiment": []}
    kernel = ex.PairKernel(softening=cfg.softening)
    for seed in cfg.seeds:
        base = photons_particles(cfg, seed)
        for t in cfg.t:
            key = {"mode": "photons", "N": cfg.N, "L": 0, "t": t, "rf": 1}
            try:
                pt = photons_point(cfg, base, t)
                totals = {lay: dict.fromkeys(("collect", "transfer", "compute", "update"), 0.0)
                          for lay in LAYOUTS}
                launches = dict.fromkeys(LAYOUTS, 0)
                for it in range(cfg.iterations):
                    p = base if it == 0 else jitter(base, cfg.jitter, (seed + 7919 * it) % 2**64)
                    tree = build_adaptive_tree(p, t, periodic=cfg.periodic)
                    pairs, _ = classify_interactions(tree, cfg.partitions)
                    for lay in LAYOUTS:
                        pts, _, _ = ex.measure_phases(lay, tree, pairs, kernel, cfg.batch_size,
                                                      cfg.repetitions)
                        for ph, v in pts.as_dict().items():
                            totals[lay][ph] += v
                        launches[lay] += pts.launches
                for lay in LAYOUTS:
                    out["experiment"].append(_experiment_row(key, lay, pt, totals[lay],
                                                             launches[lay], cfg, seed))
                    for ph, v in totals[lay].items():
                        out["phases"].append({**key, "layout": lay, "phase": ph, "seconds": v,
                                              "launches": launches[lay],
                                              "bytes": pt.volumes[lay].phases[ph], "seed": seed})
                    for ph, lay_, b in pt.volumes[lay].rows():
                        out["volumes"].append({"phase": ph, "layout": lay_, "bytes": b,
                                               "mode": "photons", "N": cfg.N, "t": t, "seed": seed})
                    out["locality"].append({**pt.reports[lay].row(), "mode": "photons", "N": cfg.N,
                                            "t": t, "window": pt.window, "seed": seed})
            except Exception as e:  # noqa: BLE001 - recorded as an error row, sweep continues
                for lay in LAYOUTS:
                    out["experiment"].append({**key, "layout": lay, "seed": seed,
                                              "status": "error", "error": f"{type(e).__name__}: {e}"})
            if progress:
                progress(f"photons t={t} seed={seed} done")
    return out


def _experiment_row(key, lay, pt: PhotonsPoint, totals, launches, cfg, seed) -> dict:
    st = pt.stats
    rep = pt.reports.get(lay)
    row = {**key, "layout": lay, "seed": seed, "status": "ok", "error": "",
           "leafs": st.n_leaves, "interactions": st.n_interactions["total"],
           "local": st.n_interactions["local"], "remote": st.n_interactions["remote"],
           "periodic": st.n_interactions["periodic"], "avg_e2": st.avg_e2, "max_e2": st.max_e2,
           "share_local": pt.share_local, "launches": launches,
           "launches_per_iter": pt.launches[lay], "iterations": cfg.iterations,
           "transfer_bytes": pt.volumes[lay].phases["transfer"]}
    if rep is not None:
        row.update({"mean_D": rep.mean_D, "max_D": rep.max_D, "mean_V": rep.mean_V,
                    "max_V": rep.max_V, "misses": rep.misses, "hits": rep.hits,
                    "miss_rate": rep.miss_rate, "group_footprint": rep.max_group_footprint,
                    "trace_window": pt.window})
    row.update({f"{ph}_s": v for ph, v in totals.items()})
    return row


def run_dbim(cfg: ExperimentConfig, progress=None) -> dict:
    out = {"phases": [], "volumes": [], "locality": [], "experiment": []}
    for seed in cfg.seeds:
        rng = _rng(seed)
        for L, t in cfg.sweep():
            key = {"mode": "dbim", "N": cfg.N, "L": L, "t": t, "rf": cfg.rf}
            try:
                tree = build_uniform_tree(cfg.N, L, 2)
                nb = e2_neighbors(tree, include_self=True)
                vals = rng.standard_normal(cfg.N) + 1j * rng.standard_normal(cfg.N)
                for lay, rf in (("base", 1), ("redundant", cfg.rf)):
                    table, _ = pack_pattern_redundant(t, rf)
                    buf, vol = pack_dbim(tree, nb, vals, table, lay)
                    times = []
                    for rep in range(cfg.repetitions + 1):
                        t0 = time.perf_counter()
                        dev = [buf.unknowns.copy()] + ([table.copies.copy()] if lay != "base" else [])
                        t1 = time.perf_counter()
                        _, pt = ex.run_dbim(buf)
                        if rep:
                            times.append((t1 - t0, pt.compute))
                        del dev
                    tr_s = float(np.median([a for a, _ in times]))
                    cp_s = float(np.median([b for _, b in times]))
                    n_hi = _dbim_window(buf, cfg.trace_limit)
                    rep_ = locality_report(ex.dbim_trace(buf, n_hi)[0], cfg.cache, lay)
                    row = {**key, "layout": lay, "seed": seed, "status": "ok", "error": "",
                           "leafs": tree.n_leaves, "launches": 1,
                           "transfer_bytes": vol.phases["transfer"],
                           "mean_D": rep_.mean_D, "max_D": rep_.max_D, "mean_V": rep_.mean_V,
                           "max_V": rep_.max_V, "misses": rep_.misses, "hits": rep_.hits,
                           "miss_rate": rep_.miss_rate,
                           "group_footprint": rep_.max_group_footprint,
                           "trace_window": n_hi / cfg.N,
                           "collect_s": 0.0, "transfer_s": tr_s, "compute_s": cp_s, "update_s": 0.0}
                    out["experiment"].append(row)
                    for ph in ("collect", "transfer", "compute", "update"):
                        out["phases"].append({**key, "layout": lay, "phase": ph,
                                              "seconds": row[f"{ph}_s"], "launches": 1,
                                              "bytes": vol.phases[ph], "seed": seed})
                    for ph, lay_, b in vol.rows():
                        out["volumes"].append({"phase": ph, "layout": lay_, "bytes": b,
                                               "mode": "dbim", "N": cfg.N, "t": t, "seed": seed})
                    out["locality"].append({**rep_.row(), "mode": "dbim", "N": cfg.N, "t": t,
                                            "window": n_hi / cfg.N, "seed": seed})
            except Exception as e:  # noqa: BLE001
                for lay in DBIM_LAYOUTS:
                    out["experiment"].append({**key, "layout": lay, "seed": seed,
                                              "status": "error", "error": f"{type(e).__name__}: {e}"})
            if progress:
                progress(f"dbim L={L} t={t} seed={seed} done")
    return out


def _dbim_window(buf, limit: int) -> int:
    per_sample = 9 * (2 + 2 * buf.t) + 1
    whole_boxes = max(1, limit // (per_sample * buf.t))
    return int(min(buf.unknowns.shape[0], whole_boxes * buf.t))


def run(cfg: ExperimentConfig, progress=None) -> dict:
    return run_photons(cfg, progress) if cfg.mode == "photons" else run_dbim(cfg, progress)


# ---------------------------------------------------------------- predict

def _fitted_shares(fit_rows) -> dict:
    return {r["component"]: model.ShareFunction(r["component"], float(r["a"]), float(r["b"]))
            for r in fit_rows}


def predict_rows(cfg: ExperimentConfig, measured_rows=None, fit_rows=None) -> list:
    shares = _fitted_shares(fit_rows) if fit_rows else None
    rows = []
    if cfg.mode == "dbim":
        for L, t in cfg.sweep():
            b = model.predict_dbim(model.DbimParams(cfg.N, L, t, cfg.rf), shares, cfg.variant)
            rows.append(_predict_row(cfg, L, t, cfg.rf, b, cfg.require_seed()))
        return rows
    if measured_rows is not None:
        points = _points_from_measured(measured_rows)
    else:
        points = {}
        for seed in cfg.seeds:
            p = photons_particles(cfg, seed)
            for t in cfg.t:
                points[(t, seed)] = _point_summary(cfg, photons_point(cfg, p, t))
    for (t, seed), s in sorted(points.items()):
        params = model.PhotonsParams(t, s["leafs"], s["interactions"], s["avg_e2"], s["max_e2"],
                                     s["launches_indexing"], s["launches_redundant"],
                                     s["share_local"])
        loc = model.LocalityInputs(s["D_base"], s["V_base"], s["D_rest"], s["V_rest"],
                                   cfg.cache.capacity, s["footprint"], cfg.calibration,
                                   cfg.regime)
        b = model.predict_photons(params, loc, shares, cfg.verbatim)
        rows.append(_predict_row(cfg, 0, t, 1, b, seed))
    return rows


def _point_summary(cfg, pt: PhotonsPoint) -> dict:
    ri, rr = pt.reports["indexing"], pt.reports["redundant"]
    st = pt.stats
    return {"leafs": st.n_leaves, "interactions": st.n_interactions["total"],
            "avg_e2": st.avg_e2, "max_e2": st.max_e2,
            "launches_indexing": pt.launches["indexing"],
            "launches_redundant": pt.launches["redundant"], "share_local": pt.share_local,
            "D_base": ri.mean_D, "V_base": ri.mean_V, "D_rest": rr.mean_D, "V_rest": rr.mean_V,
            "footprint": rr.max_group_footprint}


def _points_from_measured(rows) -> dict:
    by = {}
    for r in rows:
        if r.get("mode") != "photons" or r.get("status", "ok") != "ok":
            continue
        by.setdefault((int(float(r["t"])), int(r["seed"])), {})[r["layout"]] = r
    pts = {}
    for k, d in by.items():
        if set(d) != set(LAYOUTS):
            continue
        i, r = d["indexing"], d["redundant"]
        f = float
        pts[k] = {"leafs": f(i["leafs"]), "interactions": f(i["interactions"]),
                  "avg_e2": f(i["avg_e2"]), "max_e2": f(i["max_e2"]),
                  "launches_indexing": f(i["launches_per_iter"]),
                  "launches_redundant": f(r["launches_per_iter"]),
                  "share_local": f(i["share_local"]),
                  "D_base": f(i["mean_D"]), "V_base": f(i["mean_V"]),
                  "D_rest": f(r["mean_D"]), "V_rest": f(r["mean_V"]),
                  "footprint": f(r["group_footprint"])}
    return pts


def _predict_row(cfg, L, t, rf, b: model.SpeedupBreakdown, seed) -> dict:
    return {"mode": b.mode, "N": cfg.N, "L": L, "t": t, "rf": rf, **b.row(), "seed": seed,
            "share_collect": b.shares["collect"], "share_transfer": b.shares["transfer"],
            "share_compute": b.shares["compute"], "share_update": b.shares["update"],
            "share_p2p": b.share_p2p, "x_locality": b.factors.get("x_locality", ""),
            "x_launch": b.factors.get("x_launch", ""), "flags": ";".join(b.flags)}


# ---------------------------------------------------------------- compare

class KeyMismatch(ValueError):
    pass


def _key(r) -> tuple:
    return (r["mode"], int(float(r["N"])), int(float(r["t"])), int(float(r.get("seed", 0) or 0)))


def _series(rows, quantity: str) -> dict:
    """Per-key value of ``quantity`` (``compute`` or ``p2p``) from either CSV kind."""
    out = {}
    if rows and "x_p2p" in rows[0]:
        col = "x_compute" if quantity == "compute" else "x_p2p"
        for r in rows:
            out[_key(r)] = float(r[col])
        return out
    grouped = {}
    for r in rows:
        if r.get("status", "ok") != "ok":
            continue
        grouped.setdefault(_key(r), {})[r["layout"]] = r
    for k, d in grouped.items():
        if len(d) != 2:
            continue
        base = d.get("indexing", d.get("base"))
        rest = d.get("redundant")
        if base is None or rest is None:
            continue
        if quantity == "compute":
            out[k] = float(base["compute_s"]) / float(rest["compute_s"])
        else:
            sb = sum(float(base[f"{p}_s"]) for p in ("collect", "transfer", "compute", "update"))
            sr = sum(float(rest[f"{p}_s"]) for p in ("collect", "transfer", "compute", "update"))
            out[k] = sb / sr
    return out


def compare_rows(predicted_rows, measured_rows, quantity: str = "compute"):
    """Join predicted and measured speedups by (mode, N, t, seed).

    Returns ``(joined rows, (pearson, spearman, mean_abs_rel_err))``.
    """
    pred = _series(predicted_rows, quantity)
    meas = _series(measured_rows, quantity)
    if set(pred) != set(meas):
        only_p = sorted(set(pred) - set(meas))
        only_m = sorted(set(meas) - set(pred))
        raise KeyMismatch(f"unmatched keys: predicted-only {only_p}, measured-only {only_m}")
    keys = sorted(pred)
    joined = [{"mode": k[0], "N": k[1], "t": k[2], "seed": k[3], "quantity": quantity,
               "predicted": pred[k], "measured": meas[k]} for k in keys]
    p = [pred[k] for k in keys]
    m = [meas[k] for k in keys]
    if len(keys) >= 2 and np.ptp(p) > 0 and np.ptp(m) > 0:
        metrics = model.trend_metrics(p, m)
    elif p == m:
        metrics = (1.0, 1.0, 0.0)
    else:
        metrics = (math.nan, math.nan, float(np.mean(np.abs(np.subtract(p, m)) / np.abs(m))))
    return joined, metrics


# ---------------------------------------------------------------- fit-shares

def measured_share_points(phase_rows, layout: str = "indexing") -> dict:
    """Per component, (t, share) points from the base layout's phase times."""
    by = {}
    for r in phase_rows:
        if r["layout"] != layout:
            continue
        k = (int(float(r["t"])), r.get("seed", ""), r.get("N", ""))
        by.setdefault(k, {})[r["phase"]] = float(r["seconds"])
    pts = {}
    for (t, _, _), d in sorted(by.items()):
        tot = sum(d.values())
        if tot <= 0:
            continue
        for ph, v in d.items():
            pts.setdefault(ph, []).append((t, v / tot))
    return pts


def fit_rows(phase_rows, layout: str = "indexing") -> list:
    rows = []
    for comp, pts in measured_share_points(phase_rows, layout).items():
        f = model.fit_log_share(pts)
        rows.append({"component": comp, "a": f.a, "b": f.b, "rms": f.rms})
    return rows
