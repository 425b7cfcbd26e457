"""Transmitter side: PRBS source, PAM mapping and the modulated optical field."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .filters import bessel_response

# Maximal-length feedback taps (polynomial x^p + x^t + ... + 1), orders 3..32.
PRBS_TAPS = {
    3: (3, 2), 4: (4, 3), 5: (5, 3), 6: (6, 5), 7: (7, 6), 8: (8, 6, 5, 4),
    9: (9, 5), 10: (10, 7), 11: (11, 9), 12: (12, 6, 4, 1), 13: (13, 4, 3, 1),
    14: (14, 5, 3, 1), 15: (15, 14), 16: (16, 15, 13, 4), 17: (17, 14),
    18: (18, 11), 19: (19, 6, 2, 1), 20: (20, 17), 21: (21, 19), 22: (22, 21),
    23: (23, 18), 24: (24, 23, 22, 17), 25: (25, 22), 26: (26, 6, 2, 1),
    27: (27, 5, 2, 1), 28: (28, 25), 29: (29, 27), 30: (30, 6, 4, 1),
    31: (31, 28), 32: (32, 22, 2, 1),
}

BIT_MAPS = ("gray", "natural")


@dataclass(frozen=True)
class BitSequence:
    bits: np.ndarray
    period: int

    def __post_init__(self):
        if self.period < 1 or len(self.bits) < 1:
            raise ValueError("empty bit sequence")


@dataclass(frozen=True)
class SymbolSequence:
    symbols: np.ndarray
    baud_rate: float
    n_levels: int = 4
    bit_map: str = "gray"

    def __post_init__(self):
        if self.bit_map not in BIT_MAPS:
            raise ValueError(f"unknown bit map {self.bit_map!r}")
        if np.any(self.symbols < 0) or np.any(self.symbols >= self.n_levels):
            raise ValueError("symbol outside [0, n_levels)")

    def __len__(self):
        return len(self.symbols)

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.n_levels))


@dataclass(frozen=True)
class ComplexEnvelope:
    """Uniformly sampled complex baseband field in sqrt(mW).

    ``carrier_offset_hz`` is the offset of the optical carrier from the
    frequency at which the PNN phases were calibrated. ``baud_rate`` is
    carried along so that detection knows the symbol grid.
    """

    samples: np.ndarray
    sample_rate: float
    carrier_offset_hz: float = 0.0
    baud_rate: float | None = None

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("envelope contains non-finite samples")

    def __len__(self):
        return len(self.samples)

    @property
    def samples_per_symbol(self) -> int:
        if self.baud_rate is None:
            raise ValueError("envelope has no symbol grid")
        return int(round(self.sample_rate / self.baud_rate))

    @property
    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2))

    def omega(self) -> np.ndarray:
        """Angular baseband frequencies in FFT order (rad/s)."""
        return 2 * np.pi * np.fft.fftfreq(len(self.samples), d=1 / self.sample_rate)

    def replace(self, samples) -> "ComplexEnvelope":
        return ComplexEnvelope(samples, self.sample_rate, self.carrier_offset_hz, self.baud_rate)


def generate_prbs(order: int = 10, seed: int = 1, n_bits: int | None = None) -> BitSequence:
    """Maximal-length Fibonacci LFSR sequence.

    The register holds ``order`` bits; bit ``i-1`` of ``seed`` initialises
    stage ``i``. Each clock outputs the last stage and shifts in the XOR of
    the tapped stages, so the output obeys ``o[m] = XOR_t o[m - t]``.

    Parameters
    ----------
    order : int
        Register length; the period is ``2**order - 1``.
    seed : int
        Nonzero initial register state.
    n_bits : int, optional
        Output length. The sequence is cyclically extended or truncated to
        it; defaults to one period.
    """
    if order not in PRBS_TAPS:
        raise ValueError(f"unsupported PRBS order {order}")
    mask = (1 << order) - 1
    state = seed & mask
    if state == 0:
        raise ValueError("PRBS seed must be nonzero")
    period = mask
    n_out = period if n_bits is None else int(n_bits)
    taps = PRBS_TAPS[order]
    n_gen = min(n_out, period)
    out = np.empty(n_gen, dtype=np.uint8)
    for m in range(n_gen):
        out[m] = (state >> (order - 1)) & 1
        fb = 0
        for t in taps:
            fb ^= (state >> (t - 1)) & 1
        state = ((state << 1) | fb) & mask
    if n_out > n_gen:
        out = np.resize(out, n_out)
    return BitSequence(out, period)


def _gray_decode(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


def map_pam(bits, n_levels: int = 4, bit_map: str = "gray", baud_rate: float = 10e9) -> SymbolSequence:
    """Group bits MSB-first into PAM symbols (gray: 00,01,11,10 -> 0,1,2,3)."""
    arr = np.asarray(bits.bits if isinstance(bits, BitSequence) else bits, dtype=np.int64)
    if n_levels < 2 or n_levels & (n_levels - 1):
        raise ValueError("n_levels must be a power of two")
    if bit_map not in BIT_MAPS:
        raise ValueError(f"unknown bit map {bit_map!r}")
    m = int(np.log2(n_levels))
    if len(arr) % m:
        raise ValueError(f"{len(arr)} bits not divisible into {m}-bit symbols")
    weights = 1 << np.arange(m - 1, -1, -1)
    values = arr.reshape(-1, m) @ weights
    symbols = _gray_decode(values) if bit_map == "gray" else values
    return SymbolSequence(symbols.astype(np.int64), baud_rate, n_levels, bit_map)


def demap_pam(symbols, n_levels: int = 4, bit_map: str = "gray") -> np.ndarray:
    """Inverse of :func:`map_pam`; returns a flat uint8 bit array."""
    s = np.asarray(symbols.symbols if isinstance(symbols, SymbolSequence) else symbols, dtype=np.int64)
    m = int(np.log2(n_levels))
    values = s ^ (s >> 1) if bit_map == "gray" else s
    shifts = np.arange(m - 1, -1, -1)
    return ((values[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def default_level_amplitudes(n_levels: int = 4, peak_power_mw: float = 1.0) -> np.ndarray:
    """Field amplitudes giving equispaced intensities 0 .. peak_power_mw."""
    return np.sqrt(np.linspace(0.0, 1.0, n_levels) * peak_power_mw)


def modulate(symbols: SymbolSequence, sps: int = 16, tx_bandwidth_hz: float | None = 20e9,
             level_amplitudes=None, filter_order: int = 4) -> ComplexEnvelope:
    """Rectangular PAM field train, low-pass filtered by the transmitter.

    The train is periodic (one repetition of ``symbols``) and the Bessel
    filter is applied circularly with its DC delay removed.
    """
    if sps < 4:
        raise ValueError("need at least 4 samples per symbol")
    amps = default_level_amplitudes(symbols.n_levels) if level_amplitudes is None else np.asarray(level_amplitudes, float)
    if len(amps) != symbols.n_levels:
        raise ValueError("one amplitude per level required")
    if np.any(amps < 0) or np.any(np.diff(amps) <= 0):
        raise ValueError("level amplitudes must be nonnegative and strictly increasing")
    fs = sps * symbols.baud_rate
    train = np.repeat(amps[symbols.symbols], sps).astype(complex)
    if tx_bandwidth_hz is not None:
        f = np.fft.fftfreq(len(train), d=1 / fs)
        train = np.fft.ifft(np.fft.fft(train) * bessel_response(f, tx_bandwidth_hz, filter_order))
    return ComplexEnvelope(train, fs, 0.0, symbols.baud_rate)


def resample(env: ComplexEnvelope, new_rate: float, alias_tol: float = 1e-4) -> ComplexEnvelope:
    """Band-limited (Fourier) rate conversion of a periodic envelope.

    Raises ``ValueError`` when downsampling would discard more than
    ``alias_tol`` of the signal energy.
    """
    if new_rate <= 0:
        raise ValueError("new_rate must be positive")
    n = len(env.samples)
    m_float = n * new_rate / env.sample_rate
    m = int(round(m_float))
    if abs(m - m_float) > 1e-6 * max(1.0, m_float):
        raise ValueError("rate ratio does not give an integer number of samples")
    if m == n:
        return env
    if m < n:
        spec = np.fft.fft(env.samples)
        f = np.fft.fftfreq(n, d=1 / env.sample_rate)
        out_of_band = np.abs(f) >= new_rate / 2
        energy = np.sum(np.abs(spec) ** 2)
        if energy > 0 and np.sum(np.abs(spec[out_of_band]) ** 2) / energy > alias_tol:
            raise ValueError(
                f"resampling to {new_rate:.4g} Sa/s would alias: signal extends beyond {new_rate / 2:.4g} Hz")
    out = sps.resample(env.samples, m)
    return ComplexEnvelope(out, float(new_rate), env.carrier_offset_hz, env.baud_rate)
