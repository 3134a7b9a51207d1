"""Transmitter and receiver front end: DP-16QAM symbols, RRC pulse shaping,
matched filtering.

Symbol sequences are plain complex arrays of shape ``(N, 2)``; column 0 is the
x polarization and column 1 the y polarization. Frames are cyclic: the pulse
is applied by circular convolution over the whole frame, which is what the
FFT-based channel does anyway.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError

SYMBOL_RATE = 60e9

QAM16_ALPHABET = np.array(
    [complex(i, q) for i in (-3, -1, 1, 3) for q in (-3, -1, 1, 3)]
) / np.sqrt(10.0)


def dbm_to_watt(power_dbm: float) -> float:
    return 10.0 ** ((power_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class Pulse:
    """Root-raised-cosine pulse with unit energy.

    The pulse is defined through its exact band-limited spectrum. On a cyclic
    frame this makes the RRC/RRC pair Nyquist to machine precision.
    ``span_symbols`` is the support used when the pulse has to live on a
    finite (non-frame) time window, e.g. for kernel quadrature.
    """

    roll_off: float = 0.1
    span_symbols: int = 64

    def __post_init__(self):
        if not 0.0 < self.roll_off <= 1.0:
            raise InvalidArgumentError(f"roll_off must be in (0, 1], got {self.roll_off}")
        if self.span_symbols < 1:
            raise InvalidArgumentError("span_symbols must be positive")

    def bandwidth(self, symbol_rate: float) -> float:
        """Two-sided occupied bandwidth in Hz."""
        return (1.0 + self.roll_off) * symbol_rate

    def spectrum(self, freqs: np.ndarray, symbol_rate: float) -> np.ndarray:
        T = 1.0 / symbol_rate
        beta = self.roll_off
        f = np.abs(np.asarray(freqs, dtype=float))
        f1 = (1.0 - beta) / (2.0 * T)
        f2 = (1.0 + beta) / (2.0 * T)
        H = np.zeros_like(f)
        H[f <= f1] = np.sqrt(T)
        roll = (f > f1) & (f <= f2)
        H[roll] = np.sqrt(T) * np.cos(np.pi * T / (2.0 * beta) * (f[roll] - f1))
        return H

    def samples(self, oversampling: int, symbol_rate: float, n_symbols: int | None = None) -> np.ndarray:
        """Sampled pulse, periodic over ``n_symbols`` symbols, peak at index 0.

        Samples are in units of 1/sqrt(s) so that ``sum(|h|**2) * dt == 1``.
        """
        n_symbols = self.span_symbols if n_symbols is None else n_symbols
        ns = n_symbols * oversampling
        fs = oversampling * symbol_rate
        freqs = np.fft.fftfreq(ns, d=1.0 / fs)
        return np.fft.ifft(self.spectrum(freqs, symbol_rate)).real * fs


@dataclass
class Waveform:
    """Uniformly sampled dual-polarization field, shape ``(N * oversampling, 2)``.

    ``es`` is the energy per (dual-polarization) symbol in joules; the
    modulator scales unit-per-dimension symbols by ``sqrt(es / 2)``.
    """

    samples: np.ndarray
    symbol_rate: float
    oversampling: int
    es: float = 0.0
    power_dbm: float = -math.inf
    meta: dict = field(default_factory=dict)

    @property
    def sample_rate(self) -> float:
        return self.oversampling * self.symbol_rate

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def n_symbols(self) -> int:
        return self.samples.shape[0] // self.oversampling

    @property
    def scale(self) -> float:
        return math.sqrt(self.es / 2.0)

    def with_samples(self, samples: np.ndarray) -> "Waveform":
        return replace(self, samples=samples, meta=dict(self.meta))

    def mean_power(self) -> float:
        """Average power in W, summed over both polarizations."""
        return float(np.mean(np.sum(np.abs(self.samples) ** 2, axis=1)))

    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.dt)


def generate_symbols(n: int, seed: int) -> np.ndarray:
    """I.i.d. uniform DP-16QAM symbols with unit mean energy per polarization."""
    if n < 1:
        raise InvalidArgumentError(f"need at least one symbol, got n={n}")
    rng = np.random.default_rng(seed)
    return QAM16_ALPHABET[rng.integers(0, 16, size=(n, 2))]


def _check_symbols(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 1:
        raise InvalidArgumentError(f"symbols must have shape (N, 2), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("symbols contain NaN or Inf")
    return a


def _pulse_response(pulse: Pulse, n_samples: int, oversampling: int, symbol_rate: float) -> np.ndarray:
    fs = oversampling * symbol_rate
    freqs = np.fft.fftfreq(n_samples, d=1.0 / fs)
    # DFT of the periodic sampled pulse: fs * H(f)
    return fs * pulse.spectrum(freqs, symbol_rate)


def modulate(
    a: np.ndarray,
    pulse: Pulse,
    launch_power_dbm: float,
    oversampling: int = 8,
    symbol_rate: float = SYMBOL_RATE,
) -> Waveform:
    """Linear modulation ``A(t) = sqrt(Es/2) sum_n a_n h(t - nT)`` on a cyclic frame.

    ``Es = P * T`` so that the mean launch power over both polarizations is
    ``P`` for symbols with ``E|a_n|^2 = 2``.
    """
    a = _check_symbols(a)
    if np.isnan(launch_power_dbm) or launch_power_dbm == math.inf:
        raise InvalidArgumentError(f"launch power must be finite or -inf, got {launch_power_dbm}")
    if int(oversampling) != oversampling or oversampling < math.ceil(1.0 + pulse.roll_off):
        raise InvalidArgumentError(
            f"oversampling {oversampling} too small for roll-off {pulse.roll_off}"
        )
    oversampling = int(oversampling)
    es = dbm_to_watt(launch_power_dbm) / symbol_rate
    n = a.shape[0]
    ns = n * oversampling
    up = np.zeros((ns, 2), dtype=complex)
    up[::oversampling] = a
    H = _pulse_response(pulse, ns, oversampling, symbol_rate)
    samples = np.fft.ifft(np.fft.fft(up, axis=0) * H[:, None], axis=0)
    samples *= math.sqrt(es / 2.0)
    return Waveform(
        samples=samples,
        symbol_rate=symbol_rate,
        oversampling=oversampling,
        es=es,
        power_dbm=float(launch_power_dbm),
        meta={"roll_off": pulse.roll_off, "power_map": "P = Es/T, E|a|^2 = 2"},
    )


def matched_filter_downsample(w: Waveform, pulse: Pulse) -> np.ndarray:
    """Cyclic matched filter followed by symbol-rate sampling.

    The output is divided by the modulator scale ``sqrt(Es/2)`` so that a
    back-to-back link returns the transmitted symbols. A waveform with
    ``es == 0`` is not rescaled.
    """
    ns = w.samples.shape[0]
    if w.samples.ndim != 2 or w.samples.shape[1] != 2:
        raise InvalidArgumentError(f"waveform samples must have shape (Ns, 2), got {w.samples.shape}")
    if ns % w.oversampling:
        raise InvalidArgumentError(
            f"{ns} samples is not a whole number of symbols at oversampling {w.oversampling}"
        )
    H = _pulse_response(pulse, ns, w.oversampling, w.symbol_rate)
    filtered = np.fft.ifft(np.fft.fft(w.samples, axis=0) * np.conj(H)[:, None], axis=0) * w.dt
    scale = w.scale if w.es > 0 else 1.0
    return filtered[:: w.oversampling] / scale
