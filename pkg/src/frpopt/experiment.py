"""Experiment pipeline behind the CLI: data generation, kernels, training, sweeps.

Artifacts under ``output_dir``::

    data/batch_P{p}.frb            SSFM training batches (TrainBatch binary format)
    kernels/int_M{M}.txt           integral kernels (KernelTensor text format)
    nbgd/nbgd_P{p}_M{M}.txt        learned kernels
    nbgd/trace_P{p}_M{M}.csv       NBGD objective trace
    sweep_power.csv, sweep_memory.csv
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import DivergedError, MissingArtifactError
from .frontend import generate_symbols
from .kernels import DispersedPulseCache, KernelTensor, compute_kernel_tensor, max_relative_change
from .metrics import snr_gap, snr_report
from .model import FrpConfig, frp_predict
from .nbgd import TrainBatch, least_squares_oracle, nbgd_fit, rmse_objective
from .ssfm import run_link

log = logging.getLogger(__name__)

CSV_SCHEMA_VERSION = 1
SWEEP_COLUMNS = [
    "power_dbm", "M", "model_tag", "snr_db", "gap_db", "gap_signed_db", "rmse", "iterations", "wall_time_s",
]


class ArtifactMismatchError(MissingArtifactError):
    """Artifact exists but was produced from a different configuration."""


@dataclass
class SweepRow:
    power_dbm: float
    M: int | None
    model_tag: str
    snr_db: float
    gap_db: float
    gap_signed_db: float
    rmse: float
    iterations: int
    wall_time_s: float

    def as_csv(self) -> dict:
        return {
            "power_dbm": f"{self.power_dbm:g}",
            "M": "" if self.M is None else str(self.M),
            "model_tag": self.model_tag,
            "snr_db": f"{self.snr_db:.4f}",
            "gap_db": f"{self.gap_db:.4f}",
            "gap_signed_db": f"{self.gap_signed_db:.4f}",
            "rmse": f"{self.rmse:.6e}",
            "iterations": str(self.iterations),
            "wall_time_s": f"{self.wall_time_s:.3f}",
        }


def _ptag(p: float) -> str:
    return f"{p:g}"


def batch_path(cfg: ExperimentConfig, p: float) -> Path:
    return Path(cfg.output_dir) / "data" / f"batch_P{_ptag(p)}.frb"


def kernel_path(cfg: ExperimentConfig, M: int) -> Path:
    return Path(cfg.output_dir) / "kernels" / f"int_M{M}.txt"


def nbgd_path(cfg: ExperimentConfig, p: float, M: int) -> Path:
    return Path(cfg.output_dir) / "nbgd" / f"nbgd_P{_ptag(p)}_M{M}.txt"


def trace_path(cfg: ExperimentConfig, p: float, M: int) -> Path:
    return Path(cfg.output_dir) / "nbgd" / f"trace_P{_ptag(p)}_M{M}.csv"


def _atomic_write(path: Path, data: bytes | str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        data = data.encode()
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*jobs)))


def _check_hash(meta: dict, expected: str, path: Path) -> None:
    got = meta.get("config_hash")
    if got != expected:
        raise ArtifactMismatchError(
            f"{path} was produced by config hash {got}, current config has {expected}; regenerate it"
        )


def load_batch(cfg: ExperimentConfig, p: float) -> TrainBatch:
    path = batch_path(cfg, p)
    if not path.exists():
        raise MissingArtifactError(f"missing batch file {path}; run `frpopt gen-data` first")
    batch = TrainBatch.load(path)
    _check_hash(batch.meta, cfg.data_hash, path)
    return batch


def load_kernels(cfg: ExperimentConfig, M: int) -> KernelTensor:
    path = kernel_path(cfg, M)
    if not path.exists():
        raise MissingArtifactError(f"missing kernel file {path}; run `frpopt kernels` first")
    S = KernelTensor.load(path)
    _check_hash(S.meta, cfg.kernel_hash, path)
    return S


def load_learned(cfg: ExperimentConfig, p: float, M: int) -> KernelTensor:
    path = nbgd_path(cfg, p, M)
    if not path.exists():
        raise MissingArtifactError(f"missing learned kernel file {path}; run `frpopt train` first")
    S = KernelTensor.load(path)
    _check_hash(S.meta, cfg.nbgd_hash, path)
    return S


def frp_config(cfg: ExperimentConfig, p: float, M: int) -> FrpConfig:
    return FrpConfig.for_power(p, cfg.fiber.gamma, M, cfg.system.symbol_rate)


# -- gen-data -----------------------------------------------------------------

def _gen_one(cfg: ExperimentConfig, p: float) -> str:
    s = cfg.system
    a = generate_symbols(s.N, s.seed)
    r = run_link(a, cfg.fiber, cfg.pulse, p, cfg.ssfm, s.oversampling, s.symbol_rate)
    if cfg.fiber.gamma == 0 or np.max(np.abs(r - a)) < 1e-6:
        log.warning("batch at %g dBm is degenerate: received symbols equal transmitted ones", p)
    meta = {
        "power_dbm": p,
        "seed": s.seed,
        "config_hash": cfg.data_hash,
        "system": asdict(s),
        "fiber": asdict(cfg.fiber),
        "pulse": asdict(cfg.pulse),
        "ssfm": asdict(cfg.ssfm),
    }
    path = batch_path(cfg, p)
    _atomic_write(path, TrainBatch([(a, r)], meta).to_bytes())
    return str(path)


def _data_powers(cfg: ExperimentConfig) -> list[float]:
    return sorted(set(cfg.sweep.powers_dbm) | set(cfg.sweep.memory_powers_dbm))


def cmd_gen_data(cfg: ExperimentConfig, workers: int = 1) -> list[str]:
    """Run the SSFM link at every configured power and store the batches."""
    return _map(_gen_one, [(cfg, p) for p in _data_powers(cfg)], workers)


# -- kernels ------------------------------------------------------------------

def cmd_kernels(cfg: ExperimentConfig, check_convergence: bool = False) -> dict:
    """Integral kernels for every configured memory (one computation at the largest M).

    With ``check_convergence`` the tensor is recomputed on a refined grid and
    the largest relative change per entry is returned under ``"max_rel_change"``.
    """
    s = cfg.system
    M_max = max(cfg.all_memories)
    cache = DispersedPulseCache(cfg.fiber, cfg.pulse, cfg.quadrature, s.symbol_rate)
    S = compute_kernel_tensor(M_max, cfg.fiber, cfg.pulse, cfg.quadrature, s.symbol_rate, cache)
    S.meta["config_hash"] = cfg.kernel_hash
    report = {"files": []}
    for M in cfg.all_memories:
        sub = S.truncate(M)
        path = kernel_path(cfg, M)
        path.parent.mkdir(parents=True, exist_ok=True)
        sub.save(path)
        report["files"].append(str(path))
    if check_convergence:
        fine = compute_kernel_tensor(M_max, cfg.fiber, cfg.pulse, cfg.quadrature.refined(), s.symbol_rate)
        report["max_rel_change"] = max_relative_change(S, fine)
    return report


# -- train --------------------------------------------------------------------

def train_jobs(cfg: ExperimentConfig) -> list[tuple[float, int]]:
    jobs = {(p, M) for p in cfg.sweep.powers_dbm for M in cfg.frp.M}
    jobs |= {(p, M) for p in cfg.sweep.memory_powers_dbm for M in cfg.sweep.memories}
    return sorted(jobs)


def _initial_tensor(cfg: ExperimentConfig, M: int, init_path=None) -> KernelTensor:
    if cfg.nbgd.init == "zeros":
        return KernelTensor.zeros(M)
    if cfg.nbgd.init == "integral":
        return KernelTensor(M, load_kernels(cfg, M).values)
    if init_path is None:
        raise MissingArtifactError("nbgd.init = 'supplied' needs an --init tensor file")
    S = KernelTensor.load(init_path)
    return KernelTensor(M, S.truncate(M).values if S.memory >= M else S.values)


def _write_trace(cfg: ExperimentConfig, p: float, M: int, trace) -> None:
    lines = ["iteration,rmse,best_rmse,step_length"]
    steps = np.concatenate([[0.0], trace.step_length])
    for i, (j, b, st) in enumerate(zip(trace.objective, trace.best, steps)):
        lines.append(f"{i},{j:.17e},{b:.17e},{st:.17e}")
    _atomic_write(trace_path(cfg, p, M), "\n".join(lines) + "\n")


def _train_one(cfg: ExperimentConfig, p: float, M: int, init_path=None) -> dict:
    batch = load_batch(cfg, p)
    fcfg = frp_config(cfg, p, M)
    init = _initial_tensor(cfg, M, init_path)
    t0 = time.perf_counter()
    try:
        S, trace = nbgd_fit(batch, init, cfg.nbgd, fcfg)
    except DivergedError as exc:
        _write_trace(cfg, p, M, exc.trace)
        raise
    elapsed = time.perf_counter() - t0
    S.meta["config_hash"] = cfg.nbgd_hash
    S.meta["power_dbm"] = p
    S.meta["init"] = cfg.nbgd.init
    S.meta["training"]["wall_time_s"] = elapsed
    S.meta["training"]["batch"] = {"power_dbm": p, "seed": batch.meta.get("seed")}
    path = nbgd_path(cfg, p, M)
    path.parent.mkdir(parents=True, exist_ok=True)
    S.save(path)
    _write_trace(cfg, p, M, trace)
    try:
        oracle = rmse_objective(batch, least_squares_oracle(batch, M, fcfg), fcfg)
    except Exception as exc:  # diagnostic only
        log.warning("least-squares oracle failed at %g dBm, M=%d: %s", p, M, exc)
        oracle = float("nan")
    return {
        "power_dbm": p, "M": M, "rmse": float(trace.best[-1]), "oracle_rmse": oracle,
        "iterations": trace.iterations, "reason": trace.reason, "path": str(path),
    }


def cmd_train(cfg: ExperimentConfig, workers: int = 1, init_path=None) -> list[dict]:
    """NBGD per (power, memory) job; returns one summary per job."""
    jobs = [(cfg, p, M, init_path) for p, M in train_jobs(cfg)]
    return _map(_train_one, jobs, workers)


# -- sweeps -------------------------------------------------------------------

def _evaluate(cfg: ExperimentConfig, p: float, memories, integral_only=(), include_ssfm: bool = True) -> list[SweepRow]:
    batch = load_batch(cfg, p)
    (a, r), = batch.records
    bench = snr_report(a, r, p, "ssfm")
    rows = []
    if include_ssfm:
        rows.append(SweepRow(p, None, "ssfm", bench.snr_db, 0.0, 0.0, 0.0, 0, 0.0))
    src = cfg.frp.kernel_source
    use_int = src in ("integral", "both")
    for M in sorted(set(memories) | (set(integral_only) if use_int else set())):
        fcfg = frp_config(cfg, p, M)
        models = []
        if use_int:
            models.append(("frp_int", load_kernels(cfg, M)))
        if src in ("nbgd", "both") and M in memories:
            models.append(("frp_nbgd", load_learned(cfg, p, M)))
        for tag, S in models:
            t0 = time.perf_counter()
            rt = frp_predict(a, S, fcfg)
            rep = snr_report(a, rt, p, tag, M)
            rmse = rmse_objective(batch, S, fcfg)
            elapsed = time.perf_counter() - t0
            iters = int(S.meta.get("training", {}).get("iterations", 0))
            if tag == "frp_nbgd":
                elapsed = float(S.meta["training"].get("wall_time_s", elapsed))
            rows.append(SweepRow(
                p, M, tag, rep.snr_db, snr_gap(rep, bench), snr_gap(rep, bench, signed=True),
                rmse, iters, elapsed,
            ))
    return rows


def _row_job(cfg: ExperimentConfig, p: float, memories, integral_only, tag: str) -> str:
    rows = _evaluate(cfg, p, memories, integral_only)
    path = Path(cfg.output_dir) / f"rows_{tag}" / f"P{_ptag(p)}.json"
    _atomic_write(path, json.dumps([asdict(r) for r in rows]))
    return str(path)


def _write_csv(path: Path, rows: list[SweepRow]) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row.as_csv())
    _atomic_write(path, buf.getvalue())


def _sweep(cfg: ExperimentConfig, powers, memories, integral_only, tag: str, workers: int) -> Path:
    # fail fast on missing artifacts before spawning jobs
    for p in powers:
        load_batch(cfg, p)
    row_files = _map(_row_job, [(cfg, p, list(memories), list(integral_only), tag) for p in powers], workers)
    rows = []
    for f in row_files:
        rows.extend(SweepRow(**d) for d in json.loads(Path(f).read_text()))
    out = Path(cfg.output_dir) / f"sweep_{tag}.csv"
    _write_csv(out, rows)
    return out


def cmd_sweep_power(cfg: ExperimentConfig, workers: int = 1) -> Path:
    """SNR of SSFM, FRP_INT and FRP_NBGD versus launch power at memories ``frp.M``,
    plus FRP_INT at ``frp.M_integral``."""
    return _sweep(cfg, cfg.sweep.powers_dbm, cfg.frp.M, cfg.frp.M_integral, "power", workers)


def cmd_sweep_memory(cfg: ExperimentConfig, workers: int = 1) -> Path:
    """SNR gap versus model memory at ``sweep.memory_powers_dbm``."""
    return _sweep(cfg, cfg.sweep.memory_powers_dbm, cfg.sweep.memories, (), "memory", workers)


def read_sweep(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
