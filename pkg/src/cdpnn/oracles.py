"""Slow, loop-based reference implementations used to cross-check the fast paths.

Nothing here is vectorised on purpose: each routine follows the textbook
definition one sample at a time so that it shares no code with
:mod:`cdpnn.metrics` or :mod:`cdpnn.pnn`.
"""
from __future__ import annotations

import math

import numpy as np


def tails_bruteforce(y, labels, n_levels: int, fraction: float = 0.1):
    """(E_L, E_R) per level by explicit sorting of python lists."""
    e_left, e_right = [], []
    for n in range(n_levels):
        grp = sorted(float(v) for v, s in zip(y, labels) if s == n)
        if not grp:
            raise ValueError(f"level {n} empty")
        m = max(1, int(math.floor(fraction * len(grp))))
        e_left.append(abs(math.fsum(grp[:m]) / m))
        e_right.append(abs(math.fsum(grp[-m:]) / m))
    return e_left, e_right


def loss_l1_bruteforce(y, labels, n_levels: int) -> float:
    el, er = tails_bruteforce(y, labels, n_levels)
    best = -math.inf
    for n in range(n_levels - 1):
        best = max(best, er[n] - el[n + 1])
    return best


def thresholds_bruteforce(y, labels, n_levels: int) -> list:
    el, er = tails_bruteforce(y, labels, n_levels)
    return [(er[n] + el[n + 1]) / 2 for n in range(n_levels - 1)]


def _gray_bits(level: int, m: int) -> list:
    g = level ^ (level >> 1)
    return [(g >> (m - 1 - b)) & 1 for b in range(m)]


def ber_bruteforce(y, labels, n_levels: int) -> tuple[int, int]:
    """(bit errors, bits) with tail-midpoint thresholds and gray labels."""
    thr = thresholds_bruteforce(y, labels, n_levels)
    m = int(round(math.log2(n_levels)))
    errors = 0
    for v, s in zip(y, labels):
        decided = 0
        for t in thr:
            if v > t:
                decided += 1
        errors += sum(a != b for a, b in zip(_gray_bits(int(s), m), _gray_bits(decided, m)))
    return errors, m * len(labels)


def fir_shift_sum(x, delays_samples, coeffs) -> np.ndarray:
    """Circular time-domain FIR: y[t] = (1/N) sum_i c_i x[t - d_i]."""
    x = np.asarray(x)
    n = len(x)
    y = np.zeros(n, dtype=complex)
    for d, c in zip(delays_samples, coeffs):
        for t in range(n):
            y[t] += c * x[(t - int(d)) % n]
    return y / len(coeffs)


def quadratic_gradient(a, b, x) -> np.ndarray:
    """Analytic gradient of 0.5 x^T A x + b^T x."""
    a = np.asarray(a, float)
    return 0.5 * (a + a.T) @ np.asarray(x, float) + np.asarray(b, float)
