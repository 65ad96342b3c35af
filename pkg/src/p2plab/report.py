"""CSV schemas, header-checked writers and SVG figures."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

TREE_COLS = ("mode", "N", "L", "t", "leafs", "interactions", "local", "remote", "periodic",
             "avg_e2", "max_e2", "overfull", "seed")
PHASE_COLS = ("mode", "layout", "N", "L", "t", "rf", "phase", "seconds", "launches", "bytes", "seed")
VOLUME_COLS = ("phase", "layout", "bytes", "mode", "N", "t", "seed")
LOCALITY_COLS = ("layout", "mean_D", "max_D", "mean_V", "max_V", "misses", "hits", "miss_rate",
                 "mode", "N", "t", "window", "seed")
EXPERIMENT_COLS = ("mode", "N", "L", "t", "rf", "layout", "seed", "status", "error", "leafs",
                   "interactions", "local", "remote", "periodic", "avg_e2", "max_e2",
                   "share_local", "launches", "launches_per_iter", "iterations", "transfer_bytes",
                   "mean_D", "max_D", "mean_V", "max_V", "misses", "hits", "miss_rate",
                   "group_footprint", "trace_window", "collect_s", "transfer_s", "compute_s",
                   "update_s")
PREDICT_COLS = ("mode", "N", "L", "t", "rf", "x_collect", "x_transfer", "x_compute", "x_update",
                "x_p2p", "x_total", "regime", "seed", "share_collect", "share_transfer",
                "share_compute", "share_update", "share_p2p", "x_locality", "x_launch", "flags")
FIT_COLS = ("component", "a", "b", "rms")
COMPARE_COLS = ("mode", "N", "t", "seed", "quantity", "predicted", "measured")
SUMMARY_COLS = ("quantity", "n", "pearson", "spearman", "mean_abs_rel_err")

# columns holding wall-clock values; everything else is deterministic per seed
TIMING = {"seconds", "collect_s", "transfer_s", "compute_s", "update_s"}


class SchemaError(ValueError):
    pass


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return v


def write_csv(path, columns, rows, append: bool = False) -> Path:
    """Write ``rows`` under ``columns``; when appending, the existing header must match."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "w"
    if append and path.exists() and path.stat().st_size:
        with open(path, newline="", encoding="utf-8") as f:
            header = next(csv.reader(f), [])
        if tuple(header) != tuple(columns):
            raise SchemaError(f"{path}: header {header} differs from {list(columns)}")
        mode = "a"
    with open(path, mode, newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore", restval="")
        if mode == "w":
            w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    return path


def read_csv(path) -> list:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"CSV not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def strip_timing(rows) -> list:
    return [{k: v for k, v in r.items() if k not in TIMING} for r in rows]


# ---------------------------------------------------------------- figures

def line_chart(path, x, series: dict, xlabel: str, ylabel: str, title: str = "",
               logx: bool = True) -> Path:
    """One SVG line chart, one line per entry of ``series``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, ys in series.items():
        ax.plot(x, ys, marker="o", label=name)
    if logx and len(x) and min(x) > 0:
        ax.set_xscale("log", base=2)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def _mean_by_t(rows, key, value, where=None):
    acc = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if where and not where(r):
            continue
        v = r.get(value, "")
        if v in ("", None):
            continue
        acc[r[key]][int(float(r["t"]))].append(float(v))
    return {k: {t: sum(v) / len(v) for t, v in d.items()} for k, d in acc.items()}


def _chart_from(path, data: dict, xlabel, ylabel, title):
    ts = sorted({t for d in data.values() for t in d})
    if not ts:
        return None
    series = {k: [d.get(t, float("nan")) for t in ts] for k, d in sorted(data.items())}
    return line_chart(path, ts, series, xlabel, ylabel, title)


def run_figures(out_dir, rows) -> list:
    out = Path(out_dir)
    ok = [r for r in rows if r.get("status", "ok") == "ok"]
    figs = []
    for ph in ("collect", "transfer", "compute", "update"):
        f = _chart_from(out / f"phase_{ph}.svg", _mean_by_t(ok, "layout", f"{ph}_s"),
                        "leaf size t", "seconds", f"{ph} time by layout")
        if f:
            figs.append(f)
    f = _chart_from(out / "miss_rate.svg", _mean_by_t(ok, "layout", "miss_rate"),
                    "leaf size t", "simulated miss rate", "cache miss rate by layout")
    if f:
        figs.append(f)
    return figs


def predict_figure(out_dir, rows):
    data = {}
    for col in ("x_transfer", "x_compute", "x_p2p", "x_total"):
        data[col] = _mean_by_t([{**r, "k": col} for r in rows], "k", col)[col] if rows else {}
    return _chart_from(Path(out_dir) / "predict.svg", data, "leaf size t", "speedup",
                       "predicted speedup components")


def compare_figure(out_dir, joined, quantity):
    rows = [{**r, "k": "predicted", "v": r["predicted"]} for r in joined]
    rows += [{**r, "k": "measured", "v": r["measured"]} for r in joined]
    return _chart_from(Path(out_dir) / f"compare_{quantity}.svg", _mean_by_t(rows, "k", "v"),
                       "leaf size t", f"{quantity} speedup", f"predicted vs measured ({quantity})")


def tree_figure(out_dir, rows):
    data = {}
    for col in ("leafs", "interactions"):
        data[col] = _mean_by_t([{**r, "k": col} for r in rows], "k", col).get(col, {})
    return _chart_from(Path(out_dir) / "tree_stats.svg", data, "leaf size t", "count",
                       "leafs and interactions")
