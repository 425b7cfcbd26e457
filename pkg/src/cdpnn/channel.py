"""Linear fiber propagation, noise loading and the dispersion-induced power penalty.

Frequencies follow numpy's FFT convention. The dispersion mask is
``exp(+j beta2 L w^2 / 2)``; because the mask is even in ``w`` the transform
sign convention does not matter for it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .detection import ElectricalTrace
from .waveform import ComplexEnvelope

PS2 = 1e-24  # ps^2 -> s^2
OSNR_REF_BANDWIDTH_HZ = 12.5e9  # 0.1 nm at 1550 nm


@dataclass(frozen=True)
class FiberSpec:
    length_m: float
    beta2_ps2_per_m: float = -0.021
    attenuation_db_per_km: float = 0.2

    def __post_init__(self):
        if not np.isfinite(self.length_m) or self.length_m < 0:
            raise ValueError("fiber length must be finite and nonnegative")
        if self.attenuation_db_per_km < 0:
            raise ValueError("attenuation must be nonnegative")

    @property
    def beta2_l(self) -> float:
        """Accumulated dispersion beta2*L in s^2."""
        return self.beta2_ps2_per_m * PS2 * self.length_m

    @property
    def loss_db(self) -> float:
        return self.attenuation_db_per_km * self.length_m / 1e3

    def lossless(self) -> "FiberSpec":
        return FiberSpec(self.length_m, self.beta2_ps2_per_m, 0.0)

    def reversed_dispersion(self) -> "FiberSpec":
        return FiberSpec(self.length_m, -self.beta2_ps2_per_m, self.attenuation_db_per_km)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive white Gaussian noise working point.

    ``optical_awgn``: ``snr_db`` is an OSNR, signal power over complex noise
    power inside ``ref_bandwidth_hz`` (default 0.1 nm).
    ``electrical_awgn``: ``snr_db`` is mean-photocurrent squared over real
    noise variance inside ``ref_bandwidth_hz`` (one-sided).

    When ``reference_power_mw`` is set the noise level is pinned to that
    power instead of the measured signal power, which gives a fixed floor.
    """

    snr_db: float
    mode: str = "optical_awgn"
    ref_bandwidth_hz: float = OSNR_REF_BANDWIDTH_HZ
    reference_power_mw: float | None = None

    def __post_init__(self):
        if self.mode not in ("optical_awgn", "electrical_awgn"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.mode == "optical_awgn" and self.snr_db <= 0:
            raise ValueError("OSNR must exceed 0 dB")

    def noise_std(self, signal_power: float, sample_rate: float) -> float:
        """Per-sample std (complex total for optical, real for electrical)."""
        p = self.reference_power_mw if self.reference_power_mw is not None else signal_power
        snr = 10 ** (self.snr_db / 10)
        if self.mode == "optical_awgn":
            var = p * sample_rate / (self.ref_bandwidth_hz * snr)
        else:
            var = p**2 * sample_rate / (2 * self.ref_bandwidth_hz * snr)
        return float(np.sqrt(var))


def fiber_transfer(omega, fiber: FiberSpec) -> np.ndarray:
    """H(w) = 10^(-aL/20) exp(j beta2 L w^2 / 2) for angular frequencies in rad/s."""
    w = np.asarray(omega, dtype=float)
    mag = 10 ** (-fiber.loss_db / 20)
    return mag * np.exp(0.5j * fiber.beta2_l * w**2)


def propagate(env: ComplexEnvelope, fiber: FiberSpec) -> ComplexEnvelope:
    """Circular (periodic) linear propagation through ``fiber``."""
    x = np.asarray(env.samples)
    if not np.all(np.isfinite(x)):
        raise ValueError("envelope contains non-finite samples")
    if fiber.length_m == 0 and fiber.loss_db == 0:
        return env
    y = np.fft.ifft(np.fft.fft(x) * fiber_transfer(env.omega(), fiber))
    return env.replace(y)


def add_noise(sig, noise: NoiseSpec, rng_seed):
    """Add white Gaussian noise to an envelope (optical) or a trace (electrical).

    Deterministic for a given ``rng_seed``; an ``np.random.Generator`` is
    also accepted.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    if noise.mode == "optical_awgn":
        if not isinstance(sig, ComplexEnvelope):
            raise TypeError("optical noise needs a ComplexEnvelope")
        p = sig.power
        if noise.reference_power_mw is None and p <= 0:
            raise ValueError("signal power must be positive")
        std = noise.noise_std(p, sig.sample_rate)
        n = len(sig.samples)
        w = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * (std / np.sqrt(2))
        return sig.replace(sig.samples + w)
    if not isinstance(sig, ElectricalTrace):
        raise TypeError("electrical noise needs an ElectricalTrace")
    p = float(np.mean(sig.samples))
    if noise.reference_power_mw is None and p <= 0:
        raise ValueError("signal power must be positive")
    std = noise.noise_std(p, sig.sample_rate)
    return sig.replace(sig.samples + std * rng.standard_normal(len(sig.samples)))


def notch_omega(fiber: FiberSpec) -> float:
    """First CD-penalty notch w_m = sqrt(pi / |beta2 L|) in rad/s."""
    if fiber.beta2_l == 0:
        return np.inf
    return float(np.sqrt(np.pi / abs(fiber.beta2_l)))


def cd_penalty_analytic(fiber: FiberSpec, omega_bar):
    """Small-signal IM-DD penalty -20 log10|cos(beta2 L w^2 / 2)| in dB.

    Returns ``inf`` at an exact notch.
    """
    w = np.asarray(omega_bar, dtype=float)
    if np.any(w <= 0):
        raise ValueError("omega_bar must be positive")
    c = np.abs(np.cos(0.5 * fiber.beta2_l * w**2))
    with np.errstate(divide="ignore"):
        p = -20 * np.log10(c)
    p = np.where(c == 0, np.inf, p)
    return float(p) if p.ndim == 0 else p


def cd_penalty_measured(chain: Callable[[ComplexEnvelope], ComplexEnvelope], omega_bar,
                        sample_rate: float = 160e9, resolution_hz: float = 50e6,
                        depth: float = 0.05, carrier_offset_hz: float = 0.0):
    """Penalty of ``chain`` measured with a small cosine intensity tone.

    The input field is ``a + b cos(w t)`` with ``b = depth * a``; both input
    and output are square-law detected and the penalty is the ratio of their
    ``w`` components, each normalised by its own DC term so that flat
    losses do not count as penalty.

    ``chain`` maps an envelope to an envelope (PNN, fiber, or both).
    """
    omegas = np.atleast_1d(np.asarray(omega_bar, dtype=float))
    n = int(round(sample_rate / resolution_hz))
    t = np.arange(n) / sample_rate
    out = np.empty(len(omegas))
    for i, w in enumerate(omegas):
        f = w / (2 * np.pi)
        bin_f = f / resolution_hz
        if w <= 0 or abs(bin_f - round(bin_f)) > 1e-6 or f >= sample_rate / 2:
            raise ValueError(f"tone at {f:.6g} Hz is not resolvable on the simulation grid")
        k = int(round(bin_f))
        a, b = 1.0, depth
        s_in = ComplexEnvelope((a + b * np.cos(w * t)).astype(complex), sample_rate, carrier_offset_hz)
        s_out = chain(s_in)
        pin = np.fft.fft(np.abs(s_in.samples) ** 2)
        pout = np.fft.fft(np.abs(s_out.samples) ** 2)
        ratio = (pin[k] / pin[0]) / (pout[k] / pout[0])
        with np.errstate(divide="ignore"):
            out[i] = 20 * np.log10(np.abs(ratio))
    return out if np.ndim(omega_bar) else float(out[0])
