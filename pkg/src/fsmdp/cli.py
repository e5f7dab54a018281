"""Command-line interface: validate configs, run experiments, emit bound curves and run the oracle suite."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import FsmdpError
from .harness import OUTPUT_ROOT_ENV, emit_bound_curve, output_dir, run_benchmark


def _t_grid(text: str) -> list[float]:
    """Comma-separated values, or start:stop:count for a geometric grid."""
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
            if n < 1 or lo <= 0 or hi < lo:
                raise ValueError
            if n == 1:
                return [lo]
            ratio = (hi / lo) ** (1.0 / (n - 1))
            return [float(f"{lo * ratio**i:.12g}") for i in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad T grid {text!r}: use 'a,b,c' or 'start:stop:count'") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsmdp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a config file and print its normalised form")
    v.add_argument("config")
    v.add_argument("--quiet", action="store_true", help="only report errors")

    r = sub.add_parser("run", help="run every seed of an experiment config")
    r.add_argument("config")
    r.add_argument("--resume", action="store_true", help="continue seeds from their last snapshot")
    r.add_argument("--output-root", help=f"directory that relative output_dir resolves against "
                                         f"(default: ${OUTPUT_ROOT_ENV} or the working directory)")

    b = sub.add_parser("bound", help="write the regret-bound curve for a config")
    b.add_argument("config")
    b.add_argument("--t-grid", type=_t_grid, required=True,
                   help="total steps T: 'a,b,c' or 'start:stop:count' (geometric)")
    b.add_argument("--out", help="CSV path (default: <output_dir>/bound.csv)")

    o = sub.add_parser("oracle-suite", help="cross-check every optimised component against its oracle")
    o.add_argument("--quick", action="store_true", help="reduced instance counts")
    o.add_argument("--only", nargs="+", metavar="CHECK", help="run a subset of the checks")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            if not args.quiet:
                print(cfg.to_json())
            print(f"{args.config}: ok", file=sys.stderr)
            return 0
        if args.command == "run":
            cfg = load_config(args.config)
            status = run_benchmark(cfg, root=args.output_root, resume=args.resume)
            print(f"results in {output_dir(cfg, args.output_root)}", file=sys.stderr)
            return status
        if args.command == "bound":
            cfg = load_config(args.config)
            path = emit_bound_curve(cfg, args.t_grid, Path(args.out) if args.out else None)
            print(path)
            return 0
        if args.command == "oracle-suite":
            from .validate import CHECKS, run_suite
            unknown = set(args.only or ()) - set(CHECKS)
            if unknown:
                print(f"unknown checks {sorted(unknown)}; choose from {sorted(CHECKS)}", file=sys.stderr)
                return 2
            results = run_suite(quick=args.quick, only=args.only, report=lambda r: print(r.line(), flush=True))
            return 0 if all(r.passed for r in results) else 1
    except FsmdpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2  # pragma: no cover - argparse enforces a command


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
