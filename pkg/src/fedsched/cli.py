"""Command line entry point: ``fedsched run | sweep | baseline``."""

from __future__ import annotations

import argparse
import sys

from . import harness
from .config import load_config
from .errors import ConfigError


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedsched", description="Federated scheduling simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep", "baseline"):
        s = sub.add_parser(name)
        s.add_argument("--config", default=None, help="flat key = value file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
        if name == "sweep":
            s.add_argument("--axis", required=True)
            s.add_argument("--values", required=True, help="comma separated")
            s.add_argument("--seeds", type=int, default=1)
            s.add_argument("--summary", default="", help="write the per-value summary CSV here")
    return p


def _emit(text: str, path: str) -> None:
    if path:
        harness.write_csv(path, text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        if args.command == "sweep":
            values = [v.strip() for v in args.values.split(",") if v.strip()]
            rows, summary = harness.sweep(cfg, args.axis, values, args.seeds)
            _emit(harness.rows_to_csv(rows), cfg.output)
            if args.summary:
                harness.write_csv(args.summary, harness.summary_to_csv(summary))
            else:
                sys.stderr.write(harness.summary_to_csv(summary))
        elif args.command == "baseline":
            problem = harness.load_problem(cfg)
            _, f0 = harness.baseline(cfg, problem)
            sys.stdout.write(f"f0 = {f0:.17g}\nsamples = {len(problem.y)}\n")
        else:
            _emit(harness.rows_to_csv(harness.simulate(cfg).rows), cfg.output)
    except ConfigError as e:
        print(f"fedsched: config error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # any module failure aborts the run
        print(f"fedsched: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
