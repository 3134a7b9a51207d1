"""Discrete-time first-order regular perturbation (FRP) model.

    r_n = a_n + j (8/9) gamma Es sum_{k,l,m} (a_{n+k}^H a_{n+l}) a_{n+m} S_klm

Indices wrap cyclically. The model is linear in the coefficients, which the
optimizer relies on through :func:`feature_matrix`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .frontend import SYMBOL_RATE, dbm_to_watt
from .kernels import KernelTensor
from .ssfm import MANAKOV_FACTOR


@dataclass(frozen=True)
class FrpConfig:
    """Prefactor parameters of the FRP model.

    ``es`` is the symbol energy per polarization in joules, i.e. the square of
    the modulator scale ``sqrt(P T / 2)``; with it the first-order expansion
    of the simulated link has exactly the FRP form.
    """

    gamma: float
    es: float
    memory: int

    @classmethod
    def for_power(cls, power_dbm: float, gamma: float, memory: int, symbol_rate: float = SYMBOL_RATE):
        return cls(gamma=gamma, es=dbm_to_watt(power_dbm) / symbol_rate / 2.0, memory=memory)

    @property
    def prefactor(self) -> complex:
        return 1j * MANAKOV_FACTOR * self.gamma * self.es


def _shifted(a: np.ndarray, memory: int) -> np.ndarray:
    """Stack ``A[s + M, n] = a_{n+s}`` for ``s = -M..M`` with cyclic wrap."""
    return np.stack([np.roll(a, -s, axis=0) for s in range(-memory, memory + 1)])


def _inner_products(A: np.ndarray) -> np.ndarray:
    # inner[k, l, n] = a_{n+k}^H a_{n+l}
    return np.einsum("knp,lnp->kln", np.conj(A), A)


def frp_predict(a: np.ndarray, S: KernelTensor, cfg: FrpConfig) -> np.ndarray:
    """FRP output sequence for input symbols ``a`` of shape ``(N, 2)``."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 1:
        raise InvalidArgumentError(f"symbols must have shape (N, 2), got {a.shape}")
    if S.memory != cfg.memory:
        raise InvalidArgumentError(f"kernel memory {S.memory} != model memory {cfg.memory}")
    A = _shifted(a, S.memory)
    inner = _inner_products(A)
    weights = np.tensordot(S.values, inner, axes=([0, 1], [0, 1]))  # (m, n)
    dist = np.einsum("mn,mnp->np", weights, A)
    return a + cfg.prefactor * dist


def frp_feature(a: np.ndarray, n: int, idx, cfg: FrpConfig) -> np.ndarray:
    """Single summand ``j(8/9) gamma Es (a_{n+k}^H a_{n+l}) a_{n+m}`` as a Jones vector."""
    k, l, m = idx
    N = a.shape[0]
    ak, al, am = a[(n + k) % N], a[(n + l) % N], a[(n + m) % N]
    return cfg.prefactor * np.vdot(ak, al) * am


def normalized_features(a: np.ndarray, memory: int, rows: slice | None = None) -> np.ndarray:
    """Features ``j (a_{n+k}^H a_{n+l}) a_{n+m}`` without the ``(8/9) gamma Es`` scale.

    Shape ``(n_rows, 2, (2M+1)^3)``, column order matching ``KernelTensor.vector()``.
    """
    A = _shifted(np.asarray(a, dtype=complex), memory)
    if rows is not None:
        A = A[:, rows]
    inner = _inner_products(A)
    feats = np.einsum("kln,mnp->npklm", inner, A)
    return 1j * feats.reshape(feats.shape[0], 2, -1)


def feature_matrix(a: np.ndarray, cfg: FrpConfig, rows: slice | None = None) -> np.ndarray:
    """Scaled features; ``frp_predict(a, S) - a == feature_matrix(a, cfg) @ S.vector()``."""
    return (MANAKOV_FACTOR * cfg.gamma * cfg.es) * normalized_features(a, cfg.memory, rows)
