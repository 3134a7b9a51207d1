"""SNR gap of integral-kernel FRP versus memory, up to large M.

Shows how slowly the integral model converges in M for a strongly dispersive
link. Needs the SSFM batches of ``frpopt gen-data`` for the chosen powers.

    python scripts/integral_memory_study.py --config configs/figure2.yaml --max-memory 24
"""
import argparse

from frpopt import experiment as exp
from frpopt.config import load_config
from frpopt.kernels import compute_kernel_tensor
from frpopt.metrics import nonlinear_snr
from frpopt.model import frp_predict


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--max-memory", type=int, default=24)
    ap.add_argument("--powers", type=float, nargs="+")
    args = ap.parse_args()
    cfg = load_config(args.config)
    powers = args.powers or list(cfg.sweep.memory_powers_dbm)
    S = compute_kernel_tensor(args.max_memory, cfg.fiber, cfg.pulse, cfg.quadrature, cfg.system.symbol_rate)
    print(f"{'M':>3} " + " ".join(f"{p:>9g}dBm" for p in powers))
    data = {}
    for p in powers:
        (a, r), = exp.load_batch(cfg, p).records
        data[p] = (a, nonlinear_snr(a, r))
    for M in range(args.max_memory + 1):
        sub = S.truncate(M)
        gaps = []
        for p in powers:
            a, ref = data[p]
            gaps.append(nonlinear_snr(a, frp_predict(a, sub, exp.frp_config(cfg, p, M))) - ref)
        print(f"{M:>3} " + " ".join(f"{g:+12.3f}" for g in gaps))


if __name__ == "__main__":
    main()
