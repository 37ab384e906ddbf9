"""Command-line front end.

    quantci simulate CONFIG [--seed S] [--runs N] [--bootstrap R] [--out DIR] [--workers W]
    quantci roc [--nu 2.5 1] [--grid-size G] [--out DIR]

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

import argparse
import csv
import logging
import math
import os
import sys

from .binormal import BinormalParams, roc_curve
from .config import ConfigParseError, parse_config
from .simulation import ConfigError, run_scenario

__all__ = ["main", "emit_table", "emit_roc", "render_text_table", "statistic_labels"]

log = logging.getLogger("quantci")

_LABELS = ("Av prev", "Av abs dev", "Perc fail est", "Av int length", "Coverage", "Perc 0 or 1")


def statistic_labels(rows):
    kinds = {r.kind for r in rows}
    if kinds == {"confidence"}:
        first = "Av prev"
    elif kinds == {"prediction"}:
        first = "Av freq"
    else:
        first = "Av prev or freq"
    return (first,) + _LABELS[1:]


def _fmt(value, raw=False):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NA"
    return repr(float(value)) if raw else f"{value:.2f}"


def _table_cells(rows, raw=False):
    labels = statistic_labels(rows)
    header = ["statistic"] + [r.method_tag for r in rows]
    body = []
    for i, label in enumerate(labels):
        body.append([label] + [_fmt(r.values()[i], raw) for r in rows])
    return header, body


def render_text_table(rows, title=""):
    header, body = _table_cells(rows)
    widths = [max(len(row[j]) for row in [header] + body) for j in range(len(header))]
    line = lambda cells: " | ".join(c.ljust(w) if j == 0 else c.rjust(w)
                                    for j, (c, w) in enumerate(zip(cells, widths)))
    sep = "-+-".join("-" * w for w in widths)
    out = [title] if title else []
    out += [line(header), sep] + [line(r) for r in body]
    return "\n".join(out) + "\n"


def emit_table(rows, path, fmt="csv", title=""):
    """Write summary rows as CSV (2 decimals, plus a full-precision ``.raw.csv``) or text.

    Returns the list of written paths.
    """
    rows = list(rows)
    if not rows:
        raise ValueError("cannot emit an empty table")
    written = []
    try:
        if fmt == "csv":
            for raw, target in ((False, path), (True, _raw_path(path))):
                header, body = _table_cells(rows, raw)
                with open(target, "w", newline="", encoding="utf-8") as fh:
                    writer = csv.writer(fh, lineterminator="\n")
                    writer.writerow(header)
                    writer.writerows(body)
                written.append(target)
        elif fmt == "text":
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(render_text_table(rows, title))
            written.append(path)
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"cannot write {exc.filename or path}: {exc.strerror}") from exc
    return written


def _raw_path(path):
    root, ext = os.path.splitext(path)
    return root + ".raw" + (ext or ".csv")


def emit_roc(params: BinormalParams, grid_size, path):
    """Two-column (fpr, tpr) CSV of the population ROC curve."""
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    pts = roc_curve(params, grid_size)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["fpr", "tpr"])
            for fpr, tpr in pts:
                writer.writerow([repr(float(fpr)), repr(float(tpr))])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def _build_parser():
    parser = argparse.ArgumentParser(prog="quantci", description="Prevalence estimation interval simulations")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run every scenario of a config file")
    sim.add_argument("config")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--runs", type=int, help="override n_sim")
    sim.add_argument("--bootstrap", type=int, help="override R")
    sim.add_argument("--out", help="override the output directory")
    sim.add_argument("--workers", type=int, default=1)

    roc = sub.add_parser("roc", help="write population ROC curves")
    roc.add_argument("--nu", type=float, nargs="+", default=[2.5, 1.0])
    roc.add_argument("--mu", type=float, default=0.0)
    roc.add_argument("--sigma", type=float, default=1.0)
    roc.add_argument("--grid-size", type=int, default=1000)
    roc.add_argument("--out", default=".")
    return parser


def _simulate(args):
    manifest = parse_config(args.config)
    scenarios = []
    for sc in manifest.scenarios:
        try:
            scenarios.append(sc.with_overrides(seed=args.seed, n_sim=args.runs, R=args.bootstrap))
        except ConfigError as exc:
            raise ConfigParseError(f"override for [{sc.name}]: {exc}") from exc
    out_dir = args.out or manifest.output_dir
    os.makedirs(out_dir, exist_ok=True)
    for sc in scenarios:
        log.info("running %s (%d runs, R=%d)", sc.name, sc.n_sim, sc.R)
        result = run_scenario(sc, workers=args.workers)
        base = os.path.join(out_dir, sc.name)
        if "csv" in manifest.formats:
            emit_table(result.rows, base + ".csv", "csv")
        if "text" in manifest.formats:
            emit_table(result.rows, base + ".txt", "text", title=sc.name)
        print(render_text_table(result.rows, title=sc.name))


def _roc(args):
    os.makedirs(args.out, exist_ok=True)
    for nu in args.nu:
        path = os.path.join(args.out, f"roc_nu{nu:g}.csv")
        emit_roc(BinormalParams(args.mu, nu, args.sigma), args.grid_size, path)
        print(path)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            _simulate(args)
        else:
            _roc(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # surfaced to the shell as a runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
