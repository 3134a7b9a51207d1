"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 missing or stale artifact.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import experiment as exp
from .config import ExperimentConfig, load_config, with_overrides
from .errors import ConfigError, InvalidArgumentError, MissingArtifactError, NumericalFailureError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ARTIFACT = 0, 2, 3, 4

log = logging.getLogger("frpopt")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config (defaults used if omitted)")
    common.add_argument("--output", help="output directory, overrides output_dir")
    common.add_argument("--seed", type=int, help="symbol seed, overrides system.seed")
    common.add_argument("--workers", type=int, default=1, help="parallel jobs (default 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="frpopt", description="FRP kernel experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="simulate SSFM training batches")
    k = sub.add_parser("kernels", parents=[common], help="integral kernels")
    k.add_argument("--check-convergence", action="store_true",
                   help="recompute on a refined quadrature grid and report the change")
    t = sub.add_parser("train", parents=[common], help="NBGD-learned kernels")
    t.add_argument("--init", help="kernel tensor file used when nbgd.init is 'supplied'")
    sub.add_parser("sweep-power", parents=[common], help="SNR versus launch power CSV")
    sub.add_parser("sweep-memory", parents=[common], help="SNR gap versus memory CSV")
    return p


def _run(args, cfg: ExperimentConfig) -> None:
    if args.command == "gen-data":
        for path in exp.cmd_gen_data(cfg, args.workers):
            print(path)
    elif args.command == "kernels":
        report = exp.cmd_kernels(cfg, args.check_convergence)
        for path in report["files"]:
            print(path)
        if "max_rel_change" in report:
            status = "ok" if report["max_rel_change"] < 1e-3 else "NOT CONVERGED"
            print(f"refined-grid max relative change: {report['max_rel_change']:.3e} ({status})")
    elif args.command == "train":
        for row in exp.cmd_train(cfg, args.workers, args.init):
            print(
                f"P={row['power_dbm']:g} dBm M={row['M']}: rmse {row['rmse']:.6e} "
                f"(least-squares {row['oracle_rmse']:.6e}), {row['iterations']} iterations, {row['reason']}"
            )
    elif args.command == "sweep-power":
        print(exp.cmd_sweep_power(cfg, args.workers))
    elif args.command == "sweep-memory":
        print(exp.cmd_sweep_memory(cfg, args.workers))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = with_overrides(cfg, args.seed, args.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _run(args, cfg)
    except MissingArtifactError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except NumericalFailureError as exc:
        trace = getattr(exc, "trace", None)
        if trace is not None:
            print(f"trace kept: {trace.iterations} iterations", file=sys.stderr)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, InvalidArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
