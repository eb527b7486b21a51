"""Command line entry point: ``artifact {sweep,budget,report}``.

Failures print one line ``error: <category>: <message>`` to stderr and
exit with the category's code.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .domain import ValidationError
from .experiments import (
    ConfigError,
    ExperimentConfig,
    budget_for,
    emit_curves,
    format_lambda,
    load_config,
    parse_lambda_grid,
    read_records,
    run_sweep,
    write_sweep,
)
from .ot import SolverError

EXIT_CODES = {"usage": 2, "config": 3, "data": 4, "solver": 5, "io": 6}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _add_common(p: argparse.ArgumentParser, *, needs_config: bool = True) -> None:
    p.add_argument("--config", required=needs_config, help="run config (INI)")
    p.add_argument("--dataset", help="synthetic-1d, synthetic-2d, a shipped schema name, or a CSV path")
    p.add_argument("--seeds", type=int, help="number of seeds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--lambda-grid", help='e.g. "default" or "0, log:1e-3:1e3:15, inf"')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artifact", description="Fair regression post-processing experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    _add_common(sub.add_parser("sweep", help="run every method over the lambda grid and write CSVs"))
    b = sub.add_parser("budget", help="find the lambda that meets a fraction of the ERM unfairness")
    _add_common(b)
    b.add_argument("--method", default="OT-U W2")
    b.add_argument("--target", type=float, required=True, help="fraction of ERM unfairness in [0, 1]")
    b.add_argument("--metric", default="w2", help="w2, tv, ks or ks_grid")
    b.add_argument("--seed", type=int, help="seed to use (default: first seed of the config)")
    r = sub.add_parser("report", help="rebuild curves and the relative table from records.csv")
    _add_common(r, needs_config=False)
    return parser


def _config(args) -> ExperimentConfig:
    overrides = {"dataset": args.dataset, "seeds": args.seeds, "out": args.out}
    if args.lambda_grid is not None:
        overrides["lambda_grid"] = parse_lambda_grid(args.lambda_grid)
    return load_config(args.config, **overrides)


def _sweep(args) -> None:
    config = _config(args)
    records = run_sweep(config, progress=lambda r: logging.info("seed %d %s lambda=%s done", r.seed, r.method, format_lambda(r.lam)))
    for path in write_sweep(records, config, config.out):
        print(path)


def _budget(args) -> None:
    config = _config(args)
    res = budget_for(config, args.method, args.target, args.metric, args.seed)
    print(json.dumps({
        "method": args.method, "metric": args.metric, "target": args.target,
        "lambda": format_lambda(res.lam), "ratio": res.ratio,
        "iterations": res.iterations, "converged": res.converged,
    }))


def _report(args) -> None:
    out = Path(args.out or (load_config(args.config).out if args.config else "results"))
    src = out / "records.csv"
    if not src.is_file():
        raise CliError("io", f"no records at {src}; run 'sweep' first")
    emit_curves(read_records(src), out)
    rel = out / "relative.csv"
    if rel.is_file():
        with open(rel, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        for r in rows:
            print("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CODES["usage"] if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    handlers = {"sweep": _sweep, "budget": _budget, "report": _report}
    try:
        handlers[args.verb](args)
    except CliError as exc:
        return _fail(exc.category, str(exc))
    except ConfigError as exc:
        return _fail("config", str(exc))
    except ValidationError as exc:
        return _fail("data", str(exc))
    except SolverError as exc:
        return _fail("solver", str(exc))
    except OSError as exc:
        return _fail("io", f"{exc.filename or ''}: {exc.strerror or exc}".strip(": "))
    return 0


def _fail(category: str, message: str) -> int:
    print(f"error: {category}: {' '.join(message.split())}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
