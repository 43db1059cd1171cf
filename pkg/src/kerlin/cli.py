"""Command-line entry point: one subcommand per experiment.

Precedence for settings: built-in defaults < preset < config file < flags.
Exit codes: 0 all trials succeeded, 1 configuration error, 2 run finished
with per-trial failures (recorded in the sidecar).
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import ConfigError, resolve_config, run_experiment, write_outputs
from .presets import PRESETS, preset_overrides

_SUBCOMMANDS = {
    "gap-sweep": "gap_sweep",
    "equivalence": "equivalence",
    "gd-dynamics": "gd_dynamics",
    "gp-optimality": "gp_optimality",
    "counterexample": "counterexample",
}


def _add_common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", help="JSON config file")
    sub.add_argument("--preset", metavar="NAME",
                     help=f"named preset; one of: {', '.join(sorted(PRESETS))}")
    sub.add_argument("--seed", type=int, metavar="U64", help="master seed")
    sub.add_argument("--out", metavar="PATH", help="output CSV path")
    sub.add_argument("--p", metavar="P[,P...]",
                     help="feature dimension(s), comma separated")
    sub.add_argument("--trials", type=int, metavar="N", help="trials per cell")
    sub.add_argument("--print-config", action="store_true",
                     help="print the fully-resolved config as JSON and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kerlin",
        description="Seeded experiments comparing kernel ridge regression with "
                    "its equivalent regularized linear models.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in _SUBCOMMANDS:
        sub = subparsers.add_parser(command, help=f"run the {command} experiment")
        _add_common_flags(sub)
    return parser


def _flag_overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.out is not None:
        overrides["output"] = args.out
    if args.p is not None:
        overrides["p"] = [int(tok) for tok in str(args.p).split(",") if tok]
    if args.trials is not None:
        overrides["trials"] = args.trials
    return overrides


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    experiment = _SUBCOMMANDS[args.command]
    try:
        layers = []
        if args.preset:
            try:
                preset_exp, preset_cfg = preset_overrides(args.preset)
            except KeyError as exc:
                raise ConfigError(str(exc)) from None
            if preset_exp != experiment:
                raise ConfigError(
                    f"preset {args.preset!r} belongs to experiment "
                    f"{preset_exp!r}, not {experiment!r}"
                )
            layers.append(preset_cfg)
        if args.config:
            with open(args.config) as fh:
                file_cfg = dict(json.load(fh))
            file_cfg.pop("description", None)
            file_exp = file_cfg.pop("experiment", experiment)
            if file_exp != experiment:
                raise ConfigError(
                    f"config file is for experiment {file_exp!r}, not {experiment!r}"
                )
            layers.append(file_cfg)
        layers.append(_flag_overrides(args))
        cfg = resolve_config(experiment, *layers)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if args.print_config:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return 0

    result = run_experiment(cfg)
    out = cfg.output or f"{experiment}.csv"
    csv_path, sidecar = write_outputs(cfg, result, out)
    n_ok = len(result.records)
    print(f"{experiment}: {n_ok} records -> {csv_path} (sidecar {sidecar})")
    if result.failures:
        print(f"{len(result.failures)} trial(s) failed; see sidecar", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
