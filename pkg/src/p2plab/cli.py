"""Command-line entry point: ``p2plab VERB [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiment as exp
from . import report
from .config import ConfigError, load_config

log = logging.getLogger("p2plab")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _globals(p: argparse.ArgumentParser, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=d, help="INI-style config file")
    p.add_argument("--seed", metavar="U64", default=d, help=f"base seed (overrides {'P2PLAB_SEED'})")
    p.add_argument("--out", metavar="DIR", default=d, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="p2plab", description="Near-field data layout experiments and speedup model.")
    _globals(p, False)
    sub = p.add_subparsers(dest="verb", parser_class=_Parser)

    s = sub.add_parser("tree-stats", help="leaf and interaction counts over the sweep")
    _globals(s, True)

    s = sub.add_parser("run", help="pack, execute, trace and time both layouts over the sweep")
    _globals(s, True)
    s.add_argument("--append", action="store_true", help="append to existing CSVs (header-checked)")
    s.add_argument("--no-plots", action="store_true")

    s = sub.add_parser("predict", help="model prediction per sweep point")
    _globals(s, True)
    s.add_argument("--measured", metavar="CSV", help="experiment CSV supplying tree and locality inputs")
    s.add_argument("--shares", metavar="CSV", help="fitted share CSV from fit-shares")
    s.add_argument("--no-plots", action="store_true")

    s = sub.add_parser("compare", help="join predictions with measurements and report trend metrics")
    _globals(s, True)
    s.add_argument("predicted", metavar="PREDICTED_CSV")
    s.add_argument("measured", metavar="MEASURED_CSV")
    s.add_argument("--quantity", choices=("compute", "p2p", "both"), default="both")
    s.add_argument("--no-plots", action="store_true")

    s = sub.add_parser("fit-shares", help="least-squares share functions from measured phase times")
    _globals(s, True)
    s.add_argument("phases", metavar="PHASES_CSV")
    s.add_argument("--layout", default="indexing")
    return p


def _input(path) -> list:
    if not Path(path).is_file():
        raise UsageError(f"input file not found: {path}")
    return report.read_csv(path)


def _cmd_tree_stats(cfg, args) -> list:
    rows = exp.tree_stats_rows(cfg)
    out = Path(cfg.out)
    files = [report.write_csv(out / "tree_stats.csv", report.TREE_COLS, rows)]
    fig = report.tree_figure(out, rows)
    return files + ([fig] if fig else [])


def _cmd_run(cfg, args) -> list:
    res = exp.run(cfg, progress=log.info)
    out = Path(cfg.out)
    files = [
        report.write_csv(out / "experiment.csv", report.EXPERIMENT_COLS, res["experiment"], args.append),
        report.write_csv(out / "phases.csv", report.PHASE_COLS, res["phases"], args.append),
        report.write_csv(out / "volumes.csv", report.VOLUME_COLS, res["volumes"], args.append),
        report.write_csv(out / "locality.csv", report.LOCALITY_COLS, res["locality"], args.append),
    ]
    if not args.no_plots:
        files += report.run_figures(out, res["experiment"])
    errors = [r for r in res["experiment"] if r.get("status") == "error"]
    for r in errors:
        log.error("t=%s layout=%s: %s", r["t"], r["layout"], r["error"])
    return files


def _cmd_predict(cfg, args) -> list:
    measured = _input(args.measured) if args.measured else None
    shares = _input(args.shares) if args.shares else None
    rows = exp.predict_rows(cfg, measured, shares)
    out = Path(cfg.out)
    files = [report.write_csv(out / "predict.csv", report.PREDICT_COLS, rows)]
    if not args.no_plots and rows:
        fig = report.predict_figure(out, rows)
        files += [fig] if fig else []
    return files


def _cmd_compare(cfg, args) -> list:
    pred = _input(args.predicted)
    meas = _input(args.measured)
    qs = ("compute", "p2p") if args.quantity == "both" else (args.quantity,)
    out = Path(cfg.out)
    joined_all, summary, files = [], [], []
    for q in qs:
        joined, (pr, sp, err) = exp.compare_rows(pred, meas, q)
        joined_all += joined
        summary.append({"quantity": q, "n": len(joined), "pearson": pr, "spearman": sp,
                        "mean_abs_rel_err": err})
        print(f"{q}: n={len(joined)} pearson={pr:.4f} spearman={sp:.4f} mean_abs_rel_err={err:.4f}")
        if not args.no_plots and joined:
            fig = report.compare_figure(out, joined, q)
            files += [fig] if fig else []
    files.insert(0, report.write_csv(out / "compare.csv", report.COMPARE_COLS, joined_all))
    files.insert(1, report.write_csv(out / "compare_summary.csv", report.SUMMARY_COLS, summary))
    return files


def _cmd_fit_shares(cfg, args) -> list:
    rows = exp.fit_rows(_input(args.phases), args.layout)
    if not rows:
        raise UsageError(f"no phase rows for layout {args.layout!r} in {args.phases}")
    return [report.write_csv(Path(cfg.out) / "fit.csv", report.FIT_COLS, rows)]


COMMANDS = {"tree-stats": _cmd_tree_stats, "run": _cmd_run, "predict": _cmd_predict,
            "compare": _cmd_compare, "fit-shares": _cmd_fit_shares}
NEEDS_SEED = {"tree-stats", "run", "predict"}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.verb:
            raise UsageError("a verb is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        cfg = load_config(args.config, args.seed, args.out)
        if args.verb in NEEDS_SEED:
            cfg.require_seed()
    except (UsageError, ConfigError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        files = COMMANDS[args.verb](cfg, args)
    except (UsageError, ConfigError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
