"""Nonlinear SNR and SNR gap."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

SNR_CAP_DB = 300.0
MODEL_TAGS = ("ssfm", "frp_int", "frp_nbgd")


@dataclass(frozen=True)
class SnrReport:
    snr_db: float
    power_dbm: float
    memory: int | None
    model_tag: str
    capped: bool = False

    def __post_init__(self):
        if self.model_tag not in MODEL_TAGS:
            raise InvalidArgumentError(f"unknown model tag {self.model_tag!r}")


def _snr(a: np.ndarray, r: np.ndarray, mmse: bool) -> tuple[float, bool]:
    a = np.asarray(a, dtype=complex)
    r = np.asarray(r, dtype=complex)
    if a.shape != r.shape:
        raise InvalidArgumentError(f"shape mismatch {a.shape} vs {r.shape}")
    signal = float(np.sum(np.abs(a) ** 2))
    if mmse:
        c = np.vdot(a, r) / signal
        signal *= abs(c) ** 2
        noise = float(np.sum(np.abs(r - c * a) ** 2))
    else:
        noise = float(np.sum(np.abs(r - a) ** 2))
    if noise == 0 or signal / noise > 10 ** (SNR_CAP_DB / 10):
        return SNR_CAP_DB, True
    return 10.0 * math.log10(signal / noise), False


def nonlinear_snr(a: np.ndarray, r: np.ndarray, mmse: bool = False) -> float:
    """``10 log10(sum |a_n|^2 / sum |r_n - a_n|^2)`` in dB, capped at ``SNR_CAP_DB``.

    With ``mmse=True`` the received sequence is first modelled as ``c a + noise``
    with the least-squares complex scalar ``c``, removing common gain and phase.
    """
    return _snr(a, r, mmse)[0]


def snr_report(a, r, power_dbm: float, model_tag: str, memory: int | None = None, mmse: bool = False) -> SnrReport:
    snr, capped = _snr(a, r, mmse)
    return SnrReport(snr, power_dbm, memory, model_tag, capped)


def snr_gap(model: SnrReport, benchmark: SnrReport, signed: bool = False) -> float:
    """Absolute SNR difference in dB between a model and the benchmark at the same power."""
    if model.power_dbm != benchmark.power_dbm:
        raise InvalidArgumentError(
            f"reports at different powers: {model.power_dbm} vs {benchmark.power_dbm} dBm"
        )
    diff = model.snr_db - benchmark.snr_db
    return diff if signed else abs(diff)
