"""Command-line entry point: ``python -m linklab <subcommand> [options]``."""

from __future__ import annotations

import argparse
import math
import sys

from .config import ConfigError, SystemConfig, load_config
from .engine import (
    ExperimentPlan,
    SweepError,
    SweepReport,
    default_workers,
    no_ios_baseline,
    run_ergodic,
    run_nmse,
    split_trials,
    ts_protocol_rate,
)
from .report import FORMATS, emit_report

PI = math.pi

# subcommand -> (axis, default values, config overrides applied when no --config is given)
SWEEPS = {
    "nmse": ("rho_dbm", (-10, 0, 10, 20, 30, 40), {"m_ap": 50}),
    "rate-vs-power": ("rho_dbm", (0, 10, 20, 30, 40), {}),
    "rate-vs-antennas": ("m_ap", (16, 32, 64, 128, 256), {}),
    "rate-vs-rician": ("kappa_db", (-10, -5, 0, 5, 10, 15, 20), {}),
    "rate-vs-aoa": ("delta_psi_rad", tuple(f * PI for f in (0.02, 0.05, 0.1, 0.2, 0.3, 0.5)), {}),
    "rate-vs-pathloss": ("alpha_b", (2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5), {}),
    "protocol-compare": ("rho_dbm", (0, 10, 20, 30, 40), {}),
}


def _series(cmd: str, plan: ExperimentPlan, workers: int) -> SweepReport:
    if cmd == "nmse":
        return run_nmse(plan, workers)
    report = run_ergodic(plan, workers)
    if cmd == "rate-vs-power":
        for other in ("mmse", "mr", "zf"):
            if other != plan.config.combiner:
                report.extend(run_ergodic(plan.variant(other, combiner=other), workers))
    elif cmd == "rate-vs-rician":
        other = "random" if plan.config.ios_phases == "optimal" else "optimal"
        report.extend(run_ergodic(plan.variant(other, ios_phases=other), workers))
    elif cmd == "rate-vs-pathloss":
        report.extend(no_ios_baseline(plan, workers))
    elif cmd == "protocol-compare":
        report.extend(ts_protocol_rate(plan, workers))
    return report


def _values(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linklab", description="Surface-aided uplink simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON scenario file")
    common.add_argument("--seed", type=_seed, default=0)
    for name in SWEEPS:
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--trials", type=int, help="total coherence intervals per sweep point")
        p.add_argument("--out", default="-", help="output path, '-' for stdout")
        p.add_argument("--format", choices=FORMATS, default="csv")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--values", type=_values, help="comma-separated sweep values")
    sub.add_parser("validate", parents=[common])
    return parser


def _load(args, overrides) -> tuple[SystemConfig, list | None]:
    if args.config:
        return load_config(args.config)
    return SystemConfig(**overrides), None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            from .validate import format_table, run_suite

            variant = "appendix_a"
            if args.config:
                variant = load_config(args.config)[0].r_matrix_variant
            results = run_suite(args.seed, variant)
            print(format_table(results))
            return 0 if all(r.passed for r in results) else 1

        axis, default_values, overrides = SWEEPS[args.command]
        config, file_values = _load(args, overrides)
        values = args.values or file_values or default_values
        if args.trials is not None:
            blocks = min(config.blocks, max(1, args.trials))
            config = config.replace(blocks=blocks, trials_per_block=split_trials(args.trials, blocks))
        workers = default_workers() if args.workers is None else args.workers
        if workers < 1:
            raise ConfigError("--workers must be >= 1")
        plan = ExperimentPlan(config, axis, tuple(values), seed=args.seed)
        report = _series(args.command, plan, workers)
        emit_report(report, args.format, args.out)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SweepError as exc:
        print(f"sweep failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
