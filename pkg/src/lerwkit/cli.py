"""Command-line entry point: one subcommand per experiment kind."""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .experiment import KINDS, ConfigError, FingerprintMismatch, emit_report, execute, load_config, resolve_config

EXIT_CONFIG = 2
EXIT_ERROR = 3


def _grid(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return [int(v) if v.is_integer() else v for v in vals]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lerwkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lerwkit {__version__}")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        p.add_argument("--config", metavar="PATH", help="JSON configuration file")
        p.add_argument("--seed", type=int, metavar="U64", help="master seed")
        p.add_argument("--workers", type=int, metavar="N", help="worker threads")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--trials", type=int, metavar="N", help="trials per scale")
        p.add_argument("--grid", type=_grid, metavar="a,b,c", help="scale grid")
        if kind == "compare":
            p.add_argument("inputs", nargs="*", help="JSON artifacts to compare")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    over = {"seed": args.seed, "workers": args.workers, "out": args.out, "trials": args.trials,
            "grid": args.grid}
    try:
        if args.config:
            cfg = load_config(args.config, **over)
            if cfg["kind"] != args.kind:
                raise ConfigError(f"config kind {cfg['kind']!r} does not match subcommand {args.kind!r}")
        else:
            cfg = resolve_config({"kind": args.kind}, **over)
        if args.kind == "compare" and args.inputs:
            cfg = resolve_config(dict(cfg, params=dict(cfg["params"], inputs=args.inputs)))
        result = execute(cfg)
        csv_path, json_path = emit_report(result)
    except (ConfigError, FingerprintMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # estimator failures propagate as a nonzero status
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for v in result.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {v.name}: {v.value:.6g} (target {v.target})")
    if result.fit is not None:
        print(f"fit slope {result.fit.slope:.4f} +/- {result.fit.slope_stderr:.4f}")
    print(f"wrote {csv_path} and {json_path}")
    return result.exit_status


if __name__ == "__main__":
    sys.exit(main())
