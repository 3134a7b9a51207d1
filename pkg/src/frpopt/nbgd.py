"""Data-driven FRP coefficients: normalized batch gradient descent on the RMSE.

The FRP output is linear in the coefficients, so the squared error is a
quadratic form. The descent loop works on that form (Gram matrix and
correlation vector accumulated once) in coefficients scaled by
``kappa = (8/9) gamma Es``; the unit-norm update direction is the same in
either scaling, only the step length unit changes.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DivergedError, IllConditionedError, InvalidArgumentError
from .kernels import KernelTensor
from .model import FrpConfig, frp_predict, normalized_features
from .ssfm import MANAKOV_FACTOR

BATCH_MAGIC = b"FRPBATCH1\n"
GRAM_CHUNK = 1024


@dataclass
class TrainBatch:
    """Pairs of transmitted and received symbol sequences, each of shape ``(N, 2)``."""

    records: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.records:
            raise InvalidArgumentError("empty batch")
        recs = []
        for a, r in self.records:
            a = np.asarray(a, dtype=complex)
            r = np.asarray(r, dtype=complex)
            if a.shape != r.shape or a.ndim != 2 or a.shape[1] != 2:
                raise InvalidArgumentError(f"record shapes {a.shape} and {r.shape} do not match")
            recs.append((a, r))
        self.records = recs

    @property
    def n_symbols(self) -> int:
        return sum(a.shape[0] for a, _ in self.records)

    def to_bytes(self) -> bytes:
        """Binary format: magic line, JSON header line, then raw little-endian
        complex128 arrays ``a_0, r_0, a_1, r_1, ...``."""
        header = {"meta": self.meta, "lengths": [a.shape[0] for a, _ in self.records]}
        parts = [BATCH_MAGIC, json.dumps(header, sort_keys=True).encode() + b"\n"]
        for a, r in self.records:
            parts.append(a.astype("<c16").tobytes())
            parts.append(r.astype("<c16").tobytes())
        return b"".join(parts)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "TrainBatch":
        with open(path, "rb") as fh:
            if fh.readline() != BATCH_MAGIC:
                raise InvalidArgumentError(f"{path} is not a batch file")
            header = json.loads(fh.readline())
            records = []
            for n in header["lengths"]:
                a = np.frombuffer(fh.read(n * 32), dtype="<c16").reshape(n, 2)
                r = np.frombuffer(fh.read(n * 32), dtype="<c16").reshape(n, 2)
                records.append((a.astype(complex), r.astype(complex)))
        return cls(records, header["meta"])


@dataclass(frozen=True)
class NbgdConfig:
    """Descent hyperparameters.

    ``step_size`` is the initial update length in scaled coefficients
    ``kappa * S``. An iteration counts as progress when it lowers the best
    objective by more than ``stop_tol`` (relative); after ``decay_patience``
    iterations without progress the step is multiplied by ``decay`` and the
    iterate restarts from the best point. The run ends when the step falls
    below ``min_step_ratio * step_size`` or after ``max_iters``.
    """

    step_size: float = 1e-3
    max_iters: int = 20000
    stop_tol: float = 1e-6
    decay: float = 0.5
    decay_patience: int = 50
    min_step_ratio: float = 1e-6
    init: str = "zeros"  # zeros | integral | supplied

    def __post_init__(self):
        if not self.step_size > 0 or self.max_iters < 1 or self.stop_tol < 0:
            raise InvalidArgumentError(f"invalid NBGD config: {self}")
        if not 0 < self.decay < 1 or self.decay_patience < 1:
            raise InvalidArgumentError(f"invalid step decay settings: {self}")
        if self.init not in ("zeros", "integral", "supplied"):
            raise InvalidArgumentError(f"unknown init {self.init!r}")


@dataclass
class NbgdTrace:
    objective: np.ndarray  # J after each iteration, J(init) first
    best: np.ndarray  # best-so-far J
    step_length: np.ndarray  # Euclidean length of each update, scaled coefficients
    iterations: int
    reason: str


def _kappa(cfg: FrpConfig) -> float:
    return MANAKOV_FACTOR * cfg.gamma * cfg.es


def _residuals(batch: TrainBatch, S: KernelTensor, cfg: FrpConfig):
    for a, r in batch.records:
        yield a, r - frp_predict(a, S, cfg)


def rmse_objective(batch: TrainBatch, S: KernelTensor, cfg: FrpConfig) -> float:
    """Per-complex-dimension RMSE between received symbols and the FRP output."""
    sq = math.fsum(float(np.sum(np.abs(e) ** 2)) for _, e in _residuals(batch, S, cfg))
    return math.sqrt(sq / (2 * batch.n_symbols))


def rmse_gradient(batch: TrainBatch, S: KernelTensor, cfg: FrpConfig):
    """Wirtinger derivative of the RMSE with respect to ``conj(S)``.

    Returns ``(grad, J)`` with ``grad`` shaped like ``S.values``. Perturbing
    ``Re(S_i)`` by ``h`` changes J by ``2 Re(grad_i) h`` and perturbing
    ``Im(S_i)`` changes it by ``2 Im(grad_i) h``. At an exact fit (``J == 0``)
    the gradient is returned as zeros.
    """
    kappa = _kappa(cfg)
    corr = np.zeros(len(S), dtype=complex)
    sq = 0.0
    for a, e in _residuals(batch, S, cfg):
        sq += float(np.sum(np.abs(e) ** 2))
        for start in range(0, a.shape[0], GRAM_CHUNK):
            rows = slice(start, start + GRAM_CHUNK)
            F = kappa * normalized_features(a, S.memory, rows)
            corr += np.einsum("npi,np->i", np.conj(F), e[rows])
    n = batch.n_symbols
    J = math.sqrt(sq / (2 * n))
    if J == 0:
        return np.zeros_like(S.values), 0.0
    grad = -corr / (4 * n * J)
    return grad.reshape(S.values.shape), J


@dataclass
class _Quadratic:
    """``sum |d - F x|^2 = c0 - 2 Re(x^H b) + x^H G x`` for scaled coefficients ``x``."""

    G: np.ndarray
    b: np.ndarray
    c0: float
    n_symbols: int

    def sq_error(self, x: np.ndarray) -> float:
        val = self.c0 - 2.0 * np.vdot(x, self.b).real + np.vdot(x, self.G @ x).real
        return max(val, 0.0)

    def rmse(self, x: np.ndarray) -> float:
        return math.sqrt(self.sq_error(x) / (2 * self.n_symbols))

    def direction(self, x: np.ndarray) -> np.ndarray:
        # proportional to the conjugate Wirtinger gradient
        return self.G @ x - self.b


def _quadratic(batch: TrainBatch, memory: int) -> _Quadratic:
    P = (2 * memory + 1) ** 3
    G = np.zeros((P, P), dtype=complex)
    b = np.zeros(P, dtype=complex)
    c0 = 0.0
    for a, r in batch.records:
        d = r - a
        c0 += float(np.sum(np.abs(d) ** 2))
        for start in range(0, a.shape[0], GRAM_CHUNK):
            rows = slice(start, start + GRAM_CHUNK)
            F = normalized_features(a, memory, rows).reshape(-1, P)
            G += F.conj().T @ F
            b += F.conj().T @ d[rows].reshape(-1)
    return _Quadratic(G, b, c0, batch.n_symbols)


def nbgd_fit(
    batch: TrainBatch,
    init: KernelTensor,
    nb: NbgdConfig = NbgdConfig(),
    cfg: FrpConfig | None = None,
):
    """Normalized batch gradient descent from ``init``.

    Each iteration moves the scaled coefficients by exactly the current step
    length along the negative normalized gradient. Returns the
    best iterate and its :class:`NbgdTrace`.
    """
    if cfg is None or init.memory != cfg.memory:
        raise InvalidArgumentError("init tensor memory must match the model memory")
    kappa = _kappa(cfg)
    J0 = rmse_objective(batch, init, cfg)
    if J0 == 0 or kappa == 0:
        reason = "exact fit" if J0 == 0 else "degenerate (zero nonlinearity)"
        trace = NbgdTrace(np.array([J0]), np.array([J0]), np.zeros(0), 0, reason)
        return KernelTensor(init.memory, init.values.copy(), dict(init.meta)), trace

    quad = _quadratic(batch, init.memory)
    x = init.vector() * kappa
    best_x, best_J, ref_J = x.copy(), J0, J0
    mu = nb.step_size
    objective, best, steps = [J0], [J0], []
    stale = 0
    reason = "max_iters"
    it = 0
    for it in range(1, nb.max_iters + 1):
        g = quad.direction(x)
        norm = np.linalg.norm(g)
        if norm == 0:
            reason = "stationary"
            break
        step = (mu / norm) * g
        x = x - step
        steps.append(float(np.linalg.norm(step)))
        J = quad.rmse(x)
        objective.append(J)
        if J < best_J:
            best_J, best_x = J, x.copy()
        best.append(best_J)
        if J > 10 * J0:
            trace = NbgdTrace(np.array(objective), np.array(best), np.array(steps), it, "diverged")
            raise DivergedError(f"objective {J:.3e} exceeded 10x its initial value {J0:.3e}", trace)
        if best_J < ref_J * (1.0 - nb.stop_tol):
            ref_J, stale = best_J, 0
        else:
            stale += 1
        if stale >= nb.decay_patience:
            mu *= nb.decay
            x = best_x.copy()
            ref_J, stale = best_J, 0
            if mu < nb.min_step_ratio * nb.step_size:
                reason = "converged"
                break

    meta = {
        **{k: v for k, v in init.meta.items() if k != "memory"},
        "provenance": "nbgd",
        "training": {
            "iterations": it,
            "rmse": best_J,
            "initial_rmse": J0,
            "reason": reason,
            "step_size": nb.step_size,
            "n_symbols": batch.n_symbols,
            "batch": batch.meta,
        },
    }
    tensor = KernelTensor.from_vector(init.memory, best_x / kappa, **meta)
    trace = NbgdTrace(np.array(objective), np.array(best), np.array(steps), it, reason)
    return tensor, trace


def least_squares_oracle(batch: TrainBatch, memory: int, cfg: FrpConfig, max_condition: float = 1e12) -> KernelTensor:
    """Global minimizer of the squared error via the normal equations."""
    P = (2 * memory + 1) ** 3
    if batch.n_symbols < P:
        raise InvalidArgumentError(f"{batch.n_symbols} symbols cannot determine {P} coefficients")
    kappa = _kappa(cfg)
    if kappa == 0:
        raise IllConditionedError("zero nonlinearity: features vanish", math.inf)
    quad = _quadratic(batch, memory)
    cond = np.linalg.cond(quad.G)
    if not np.isfinite(cond) or cond > max_condition:
        raise IllConditionedError(f"Gram matrix condition number {cond:.3e}", cond)
    x = np.linalg.solve(quad.G, quad.b)
    return KernelTensor.from_vector(
        memory, x / kappa, provenance="least_squares", condition=float(cond)
    )
