"""Command-line entry point.

Exit status: 0 success, 1 invalid configuration, 2 runtime failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings

from .config import ConfigParseError, ConfigValidationError, load_config
from .experiment import ExperimentError, oracle_table, run_experiment
from .gamma import RegimeWarning
from .export import FORMATS, OutputError, check_output_dir, export

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


def _formats(text: str) -> list[str]:
    items = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in items if f not in FORMATS]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"formats must be a comma list drawn from {','.join(FORMATS)}")
    return items


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64)")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geodephase", description="Pseudo-spin dephasing Monte Carlo experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the experiment described by a config file")
    run.add_argument("config")
    run.add_argument("--seed", type=_seed, help="override root_seed")
    run.add_argument("--out", help="override the output directory")
    run.add_argument("--formats", type=_formats, help="comma list of csv,json,svg")
    run.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")

    orc = sub.add_parser("oracle", help="print the closed-form oracle table for a config as JSON")
    orc.add_argument("config")
    return p


def _cmd_run(args) -> int:
    cfg = load_config(args.config).with_overrides(seed=args.seed, out=args.out, formats=args.formats)
    check_output_dir(cfg.output.dir)
    with warnings.catch_warnings():
        # Reported below from the bundle instead.
        warnings.simplefilter("ignore", RegimeWarning)
        bundle = run_experiment(cfg, workers=args.workers)
    if bundle.regime is not None:
        for msg in bundle.regime.messages:
            print(f"regime warning: {msg}", file=sys.stderr)
    paths = export(bundle)
    for r in bundle.rates:
        line = f"{r.label}: rate = {r.rate:.6g} +/- {r.rate_stderr:.2g}"
        if r.oracle is not None:
            line += f"  oracle = {r.oracle:.6g}  deviation = {100 * r.relative_deviation:+.2f}%"
        print(line)
    if bundle.elliott is not None:
        e = bundle.elliott
        print(f"elliott: a = {e.prefactor_a:.4g}  R^2 = {e.r_squared:.5f}  max a deviation = {e.a_max_rel_deviation:.3f}")
    for path in paths:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    table = oracle_table(cfg)
    sys.stdout.write(json.dumps(table.model_dump(mode="json"), indent=2) + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_oracle(args)
    except (ConfigParseError, ConfigValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ExperimentError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
