"""Power sweep and memory sweep for the 60 GBd single-span link.

Runs data generation, integral kernels, NBGD training and both sweeps, then
prints the SNR gaps. Steps whose artifacts already exist for the same
configuration are reused unless ``--force`` is given.

    python scripts/reproduce_fig2.py --config configs/figure2.yaml
"""
import argparse
import logging
from pathlib import Path

from frpopt import experiment as exp
from frpopt.config import load_config, with_overrides
from frpopt.errors import MissingArtifactError


def _have(loader, *args) -> bool:
    try:
        loader(*args)
        return True
    except MissingArtifactError:
        return False


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(Path(__file__).parents[1] / "configs" / "figure2.yaml"))
    ap.add_argument("--output")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--force", action="store_true", help="recompute every artifact")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = with_overrides(load_config(args.config), output=args.output)

    powers = sorted(set(cfg.sweep.powers_dbm) | set(cfg.sweep.memory_powers_dbm))
    if args.force or not all(_have(exp.load_batch, cfg, p) for p in powers):
        logging.info("simulating %d SSFM batches", len(powers))
        exp.cmd_gen_data(cfg, args.workers)
    if args.force or not all(_have(exp.load_kernels, cfg, M) for M in cfg.all_memories):
        logging.info("integral kernels up to M = %d", max(cfg.all_memories))
        exp.cmd_kernels(cfg)
    jobs = exp.train_jobs(cfg)
    if cfg.frp.kernel_source != "integral" and (
        args.force or not all(_have(exp.load_learned, cfg, p, M) for p, M in jobs)
    ):
        logging.info("training %d NBGD models", len(jobs))
        exp.cmd_train(cfg, args.workers)

    power_csv = exp.cmd_sweep_power(cfg, args.workers)
    memory_csv = exp.cmd_sweep_memory(cfg, args.workers)

    print(f"\n{power_csv}")
    print(f"{'P [dBm]':>8} {'model':>9} {'M':>3} {'SNR [dB]':>9} {'gap [dB]':>9}")
    for r in exp.read_sweep(power_csv):
        print(f"{r['power_dbm']:>8} {r['model_tag']:>9} {r['M']:>3} {float(r['snr_db']):9.3f} "
              f"{float(r['gap_signed_db']):+9.3f}")
    print(f"\n{memory_csv}")
    print(f"{'P [dBm]':>8} {'M':>3} {'FRP_INT gap':>12} {'FRP_NBGD gap':>13}")
    table = {}
    for r in exp.read_sweep(memory_csv):
        if r["model_tag"] != "ssfm":
            table.setdefault((r["power_dbm"], int(r["M"])), {})[r["model_tag"]] = float(r["gap_db"])
    for (p, M), g in sorted(table.items(), key=lambda kv: (float(kv[0][0]), kv[0][1])):
        print(f"{p:>8} {M:>3} {g.get('frp_int', float('nan')):12.3f} {g.get('frp_nbgd', float('nan')):13.3f}")


if __name__ == "__main__":
    main()
