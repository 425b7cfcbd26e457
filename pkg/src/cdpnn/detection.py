"""Square-law detection, receiver filtering, scope sampling and trace alignment."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .filters import bessel_response


@dataclass(frozen=True)
class ElectricalTrace:
    samples: np.ndarray
    sample_rate: float
    samples_per_symbol: int

    def __post_init__(self):
        if self.samples_per_symbol < 1:
            raise ValueError("samples_per_symbol must be >= 1")
        if len(self.samples) % self.samples_per_symbol:
            raise ValueError("trace length is not a whole number of symbols")

    def __len__(self):
        return len(self.samples)

    @property
    def n_symbols(self) -> int:
        return len(self.samples) // self.samples_per_symbol

    def replace(self, samples) -> "ElectricalTrace":
        return ElectricalTrace(samples, self.sample_rate, self.samples_per_symbol)


def photodetect(env) -> ElectricalTrace:
    """|field|^2, the network's only nonlinearity."""
    sps = env.samples_per_symbol if env.baud_rate is not None else 1
    return ElectricalTrace(np.abs(env.samples) ** 2, env.sample_rate, sps)


def receiver_response(freqs_hz, pd_bandwidth_hz: float | None, scope_bandwidth_hz: float | None,
                      order: int = 4) -> np.ndarray:
    h = np.ones(len(freqs_hz), dtype=complex)
    for bw in (pd_bandwidth_hz, scope_bandwidth_hz):
        if bw is not None:
            h = h * bessel_response(freqs_hz, bw, order)
    return h


def receiver_chain(trace: ElectricalTrace, baud_rate: float, pd_bandwidth_hz: float | None = 20e9,
                   scope_bandwidth_hz: float | None = 16e9, scope_rate: float | None = 80e9,
                   order: int = 4) -> ElectricalTrace:
    """Photodiode and scope low-pass filters followed by decimation.

    Both filters are 4th-order Bessel with their DC delay removed and are
    applied circularly.
    """
    scope_rate = trace.sample_rate if scope_rate is None else scope_rate
    if scope_rate > trace.sample_rate * (1 + 1e-9):
        raise ValueError("scope rate exceeds the input rate")
    n_sps = scope_rate / baud_rate
    if abs(n_sps - round(n_sps)) > 1e-9:
        raise ValueError("scope rate must be an integer multiple of the baud rate")
    decim = trace.sample_rate / scope_rate
    if abs(decim - round(decim)) > 1e-9:
        raise ValueError("input rate must be an integer multiple of the scope rate")
    x = np.asarray(trace.samples, dtype=float)
    f = np.fft.rfftfreq(len(x), d=1 / trace.sample_rate)
    y = np.fft.irfft(np.fft.rfft(x) * receiver_response(f, pd_bandwidth_hz, scope_bandwidth_hz, order), n=len(x))
    return ElectricalTrace(y[:: int(round(decim))], scope_rate, int(round(n_sps)))


def find_alignment(trace: ElectricalTrace, target, k: int | None = None, resolution: str = "symbol") -> int:
    """Sample shift ``s`` such that ``roll(trace, -s)`` best matches ``target``.

    Candidate shifts are scored by the circular correlation between the
    shifted trace, subsampled at index ``k`` of each symbol, and the
    mean-removed target levels. ``resolution="symbol"`` only considers
    whole-symbol shifts (multiples of ``samples_per_symbol``), which keeps
    the sampling phase fixed; ``"sample"`` searches every sample shift.
    Returned in ``(-N/2, N/2]``; ties resolve to the first maximum in shift
    order 0, 1, 2, ...
    """
    if resolution not in ("symbol", "sample"):
        raise ValueError(f"unknown resolution {resolution!r}")
    symbols = np.asarray(getattr(target, "symbols", target), dtype=float)
    sps = trace.samples_per_symbol
    n = len(trace.samples)
    if n % (len(symbols) * sps):
        raise ValueError("trace must span an integer number of target periods")
    y = np.asarray(trace.samples, dtype=float)
    if np.ptp(y) == 0:
        raise ValueError("alignment undefined for a constant trace")
    k = sps // 2 if k is None else k
    reps = n // (len(symbols) * sps)
    u = np.zeros(n)
    u[k::sps] = np.tile(symbols - symbols.mean(), reps)
    corr = np.fft.irfft(np.fft.rfft(y) * np.conj(np.fft.rfft(u)), n=n)
    if resolution == "symbol":
        corr = np.where(np.arange(n) % sps == 0, corr, -np.inf)
    top = corr.max()
    s = int(np.flatnonzero(corr >= top - 1e-9 * abs(top))[0])
    return s - n if s > n // 2 else s


def align(trace: ElectricalTrace, target, k: int | None = None, resolution: str = "symbol") -> ElectricalTrace:
    s = find_alignment(trace, target, k, resolution)
    return trace.replace(np.roll(trace.samples, -s))
