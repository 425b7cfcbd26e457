"""Analog low-pass responses evaluated on FFT grids."""
from __future__ import annotations

import numpy as np
from scipy import signal


def bessel_response(freqs_hz, cutoff_hz: float, order: int = 4, remove_delay: bool = True):
    """Complex response of an analog Bessel low-pass at ``freqs_hz``.

    The filter is magnitude-normalized (-3 dB at ``cutoff_hz``). With
    ``remove_delay`` the DC group delay is compensated so that filtered
    symbols stay centred on their slots.
    """
    if cutoff_hz <= 0:
        raise ValueError("cutoff must be positive")
    wc = 2 * np.pi * cutoff_hz
    b, a = signal.bessel(order, wc, btype="low", analog=True, norm="mag")
    w = 2 * np.pi * np.asarray(freqs_hz, dtype=float)
    _, h = signal.freqs(b, a, worN=w)
    if remove_delay:
        # all-pole: tau(0) = a1 / a0 with coefficients in descending powers
        tau0 = a[-2] / a[-1]
        h = h * np.exp(1j * w * tau0)
    return h


def bessel_magnitude_db(freq_hz: float, cutoff_hz: float, order: int = 4) -> float:
    h = bessel_response(np.array([freq_hz]), cutoff_hz, order, remove_delay=False)
    return float(20 * np.log10(np.abs(h[0])))
