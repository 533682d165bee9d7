"""
Command line entry point.

    ddlab run --experiment E4 --seed 7 --out e4.csv --workers 4
    ddlab run --experiment ber --config link.cfg --snr 0:2:20 --out ber.csv

Exit status: 0 when the experiment passes, 1 when it fails, 2 on a
configuration error. For E1..E6 a config file may only carry a ``[sim]``
section; the experiment fixes everything else. The run manifest is written
next to the CSV as ``<out>.manifest.json``.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, canonical_json, config_digest, parse_config_text, parse_snr_range, \
    spec_from_sections
from .engine import RunManifest, write_csv
from .experiments import EXPERIMENTS, default_spec, run_experiment

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ddlab", description="Delay-Doppler modulation lab.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a claim experiment or a BER curve")
    r.add_argument("--experiment", required=True, type=str.upper,
                   choices=sorted(EXPERIMENTS) + ["BER"], help="E1..E6 or ber")
    r.add_argument("--config", type=Path, help="sectioned key=value config file")
    r.add_argument("--seed", type=_u64, help="master seed (overrides the config)")
    r.add_argument("--snr", help="start:step:stop in dB, inclusive (overrides the config)")
    r.add_argument("--out", type=Path, required=True, help="CSV output path")
    r.add_argument("--workers", type=_positive, default=1)
    r.add_argument("--quiet", action="store_true", help="do not print the report")
    return p


def resolve_spec(args: argparse.Namespace):
    name = args.experiment
    base = default_spec(name)
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        sections = parse_config_text(text, str(args.config))
        if name != "BER":
            extra = sorted(set(sections) - {"sim"})
            if extra:
                sec = sections[extra[0]]
                line = min(e.line for e in sec.values()) if sec else 0
                raise ConfigError(f"{args.config}:{line}: experiment {name} only accepts a [sim] "
                                  f"section, found [{extra[0]}]")
        base = spec_from_sections(sections, base.experiment, str(args.config), base)
    if args.seed is not None:
        base = replace(base, master_seed=args.seed)
    if args.snr is not None:
        base = replace(base, snr_db=parse_snr_range(args.snr))
    return base


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = resolve_spec(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_experiment(args.experiment, spec, args.workers)
    except ValueError as exc:
        # invalid combinations only detectable when the link is built
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(result.records, args.out)
    manifest = RunManifest.create(spec.master_seed, canonical_json(spec), config_digest(spec))
    Path(str(args.out) + ".manifest.json").write_text(manifest.to_json() + "\n")
    if not args.quiet:
        print(result.report())
    return EXIT_PASS if result.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
