"""Single-span Manakov propagation by the symmetric split-step Fourier method.

The span is simulated in attenuation-normalized form::

    i dA/dz = (beta2 / 2) d^2A/dt^2 - (8/9) gamma exp(-alpha z) |A|^2 A

so the field norm is conserved and loss only weights the nonlinearity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .frontend import SYMBOL_RATE, Pulse, Waveform, matched_filter_downsample, modulate

MANAKOV_FACTOR = 8.0 / 9.0


@dataclass(frozen=True)
class FiberParams:
    """Span parameters in SI units. Defaults are a 120 km standard SMF."""

    alpha: float = 0.2 * math.log(10.0) / 10.0 / 1e3  # 0.2 dB/km, power attenuation in 1/m
    beta2: float = -21.7e-27  # -21.7 ps^2/km
    gamma: float = 1.3e-3  # 1.3 /(W km)
    length: float = 120e3

    def __post_init__(self):
        if self.alpha < 0 or self.gamma < 0 or self.length <= 0:
            raise InvalidArgumentError(f"invalid fiber parameters: {self}")

    @classmethod
    def from_engineering(
        cls,
        alpha_db_km: float = 0.2,
        beta2_ps2_km: float = -21.7,
        gamma_w_km: float = 1.3,
        length_km: float = 120.0,
    ) -> "FiberParams":
        return cls(
            alpha=alpha_db_km * math.log(10.0) / 10.0 / 1e3,
            beta2=beta2_ps2_km * 1e-27,
            gamma=gamma_w_km * 1e-3,
            length=length_km * 1e3,
        )

    def effective_length(self, z: float | None = None) -> float:
        """Loss-weighted length ``(1 - exp(-alpha z)) / alpha``; ``z`` defaults to the span."""
        z = self.length if z is None else z
        if self.alpha == 0:
            return z
        return -math.expm1(-self.alpha * z) / self.alpha


@dataclass(frozen=True)
class SsfmConfig:
    step_size: float = 100.0  # m
    step_scheme: str = "uniform"  # or "log": equal loss-weighted length per step

    def __post_init__(self):
        if not self.step_size > 0:
            raise InvalidArgumentError(f"step_size must be positive, got {self.step_size}")
        if self.step_scheme not in ("uniform", "log"):
            raise InvalidArgumentError(f"unknown step scheme {self.step_scheme!r}")


def step_boundaries(fiber: FiberParams, cfg: SsfmConfig) -> np.ndarray:
    """Positions ``0 = z_0 < ... < z_K = L`` of the split-step grid."""
    if cfg.step_size > fiber.length:
        raise InvalidArgumentError(
            f"step size {cfg.step_size} m exceeds span length {fiber.length} m"
        )
    n_steps = int(math.ceil(fiber.length / cfg.step_size - 1e-9))
    if cfg.step_scheme == "uniform" or fiber.alpha == 0:
        return np.linspace(0.0, fiber.length, n_steps + 1)
    frac = np.linspace(0.0, 1.0, n_steps + 1) * -math.expm1(-fiber.alpha * fiber.length)
    z = -np.log1p(-frac) / fiber.alpha
    z[-1] = fiber.length
    return z


def _dispersion_phase(n_samples: int, sample_rate: float, beta2: float) -> np.ndarray:
    """Per-bin phase rate ``2 pi^2 beta2 f^2`` (rad/m) of the linear operator."""
    f = np.fft.fftfreq(n_samples, d=1.0 / sample_rate)
    return 2.0 * np.pi**2 * beta2 * f**2


def propagate(w: Waveform, fiber: FiberParams, cfg: SsfmConfig = SsfmConfig()) -> Waveform:
    """Propagate ``w`` over the span with the symmetric split-step scheme.

    Each step is half a dispersion step, one exact nonlinear phase rotation
    with the step-averaged loss weight, and another half dispersion step.
    Adjacent half steps are merged.
    """
    A = np.asarray(w.samples, dtype=complex)
    if A.size == 0:
        raise InvalidArgumentError("empty waveform")
    z = step_boundaries(fiber, cfg)
    h = np.diff(z)
    phase_rate = _dispersion_phase(A.shape[0], w.sample_rate, fiber.beta2)[:, None]
    gamma_nl = MANAKOV_FACTOR * fiber.gamma
    if fiber.alpha > 0:
        leff = np.exp(-fiber.alpha * z[:-1]) * -np.expm1(-fiber.alpha * h) / fiber.alpha
    else:
        leff = h

    linear = fiber.beta2 != 0
    nonlinear = gamma_nl != 0
    if not (linear or nonlinear):
        return w.with_samples(A.copy())
    spectrum = np.fft.fft(A, axis=0)
    half = 0.5 * h[0]
    for i in range(h.size):
        if linear:
            spectrum *= np.exp(1j * phase_rate * half)
        if nonlinear:
            A = np.fft.ifft(spectrum, axis=0)
            power = np.sum(A.real**2 + A.imag**2, axis=1, keepdims=True)
            A *= np.exp(1j * gamma_nl * leff[i] * power)
            spectrum = np.fft.fft(A, axis=0)
        half = 0.5 * h[i] + (0.5 * h[i + 1] if i + 1 < h.size else 0.0)
        if nonlinear and not np.isfinite(spectrum).all():
            raise NumericalFailureError(
                f"non-finite field at z = {z[i + 1]:.1f} m (step {i + 1} of {h.size})"
            )
    if linear:
        spectrum *= np.exp(1j * phase_rate * 0.5 * h[-1])
    out = np.fft.ifft(spectrum, axis=0)
    if not np.isfinite(out).all():
        raise NumericalFailureError("non-finite field at span end")
    return w.with_samples(out)


def cdc(w: Waveform, fiber: FiberParams) -> Waveform:
    """Ideal chromatic dispersion compensation for the whole span."""
    if fiber.beta2 == 0:
        return w.with_samples(np.array(w.samples, dtype=complex))
    phase = _dispersion_phase(w.samples.shape[0], w.sample_rate, fiber.beta2)
    spectrum = np.fft.fft(w.samples, axis=0) * np.exp(-1j * phase * fiber.length)[:, None]
    return w.with_samples(np.fft.ifft(spectrum, axis=0))


def run_link(
    a: np.ndarray,
    fiber: FiberParams,
    pulse: Pulse,
    power_dbm: float,
    cfg: SsfmConfig = SsfmConfig(),
    oversampling: int = 8,
    symbol_rate: float = SYMBOL_RATE,
) -> np.ndarray:
    """Modulator, span, CDC, matched filter and sampler; returns received symbols."""
    w = modulate(a, pulse, power_dbm, oversampling, symbol_rate)
    return matched_filter_downsample(cdc(propagate(w, fiber, cfg), fiber), pulse)
