"""Level statistics, separation losses, thresholds, BER and eye folding."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detection import ElectricalTrace
from .waveform import demap_pam

TAIL_FRACTION = 0.1
SIGMA_CUT = 1.28  # Gaussian quantile enclosing the outer 10 %


@dataclass(frozen=True)
class LevelStats:
    counts: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    e_left: np.ndarray
    e_right: np.ndarray
    k: int | None = None

    @property
    def n_levels(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class Thresholds:
    values: np.ndarray

    @property
    def increasing(self) -> bool:
        return bool(np.all(np.diff(self.values) > 0))


@dataclass(frozen=True)
class BerResult:
    errors: int
    n_bits: int

    @property
    def at_floor(self) -> bool:
        return self.errors == 0

    @property
    def floor(self) -> float:
        return 1.0 / self.n_bits

    @property
    def value(self) -> float:
        """Error ratio; zero errors report the floor 1/n_bits as an upper bound."""
        return self.errors / self.n_bits if self.errors else self.floor

    def __float__(self):
        return self.value


def _symbols(target) -> np.ndarray:
    return np.asarray(getattr(target, "symbols", target))


def subsample(trace: ElectricalTrace, k: int | None = None) -> np.ndarray:
    """One sample per symbol, index ``k`` of each slot (default N_sps/2)."""
    sps = trace.samples_per_symbol
    k = sps // 2 if k is None else k
    if not 0 <= k < sps:
        raise ValueError(f"k={k} outside [0, {sps})")
    return np.asarray(trace.samples)[k::sps]


def level_stats(y_k, target, n_levels: int | None = None, k: int | None = None,
                method: str = "decile") -> LevelStats:
    """Group per-symbol samples by their expected level.

    ``E_L``/``E_R`` are the absolute means of the lowest/highest tail of each
    group. ``method="decile"`` takes the extreme ``max(1, floor(0.1 N_n))``
    sorted samples; ``method="sigma"`` takes samples beyond ``I -/+ 1.28 sigma``
    (falling back to the extreme sample when that set is empty).
    """
    y = np.asarray(y_k, dtype=float)
    sym = _symbols(target)
    reps, rem = divmod(len(y), len(sym))
    if rem:
        raise ValueError("sample count must be a multiple of the target length")
    if reps > 1:
        sym = np.tile(sym, reps)
    n_levels = int(getattr(target, "n_levels", 0) or sym.max() + 1) if n_levels is None else n_levels
    counts = np.bincount(sym, minlength=n_levels)
    if len(counts) > n_levels:
        raise ValueError("target contains symbols beyond n_levels")
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        raise ValueError(f"level {int(empty[0])} has no samples")
    order = np.lexsort((y, sym))
    ys = y[order]
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    sums = np.add.reduceat(ys, starts)
    means = sums / counts
    sq = np.add.reduceat(ys**2, starts) / counts
    stds = np.sqrt(np.maximum(sq - means**2, 0.0))
    e_left = np.empty(n_levels)
    e_right = np.empty(n_levels)
    for n in range(n_levels):
        grp = ys[starts[n]:starts[n] + counts[n]]
        if method == "decile":
            m = max(1, int(TAIL_FRACTION * counts[n]))
            e_left[n] = abs(grp[:m].sum()) / m
            e_right[n] = abs(grp[-m:].sum()) / m
        elif method == "sigma":
            lo = grp[grp < means[n] - SIGMA_CUT * stds[n]]
            hi = grp[grp > means[n] + SIGMA_CUT * stds[n]]
            lo = lo if len(lo) else grp[:1]
            hi = hi if len(hi) else grp[-1:]
            e_left[n] = abs(lo.sum()) / len(lo)
            e_right[n] = abs(hi.sum()) / len(hi)
        else:
            raise ValueError(f"unknown tail method {method!r}")
    return LevelStats(counts, means, stds, e_left, e_right, k)


def loss_l1(stats: LevelStats) -> float:
    """max_n (E_R[n] - E_L[n+1]); negative iff all adjacent levels separate."""
    return float(np.max(stats.e_right[:-1] - stats.e_left[1:]))


def loss_l2(trace: ElectricalTrace, target, k: int | None = None, method: str = "decile") -> float:
    """L1(k) + L1(k+1), default k = N_sps/2."""
    sps = trace.samples_per_symbol
    k = sps // 2 if k is None else k
    if k + 1 >= sps:
        raise ValueError("k + 1 must lie inside the symbol")
    total = 0.0
    for kk in (k, k + 1):
        total += loss_l1(level_stats(subsample(trace, kk), target, k=kk, method=method))
    return total


def thresholds(stats: LevelStats) -> Thresholds:
    return Thresholds(0.5 * (stats.e_right[:-1] + stats.e_left[1:]))


def digitize(y_k, thr: Thresholds) -> np.ndarray:
    if not thr.increasing:
        raise ValueError("decision thresholds are not strictly increasing")
    return np.searchsorted(thr.values, np.asarray(y_k), side="left")


def ber(trace, target, stats: LevelStats | None = None, k: int | None = None,
        bit_map: str | None = None, n_levels: int | None = None, on_overlap: str = "raise") -> BerResult:
    """Digitise with the tail-midpoint thresholds, de-map and count bit errors.

    ``trace`` may be an :class:`ElectricalTrace` (subsampled at ``k``) or
    an already subsampled array.

    ``on_overlap`` controls what happens when the tail thresholds are not
    strictly increasing (closed eye): ``"raise"`` (default) raises
    ``ValueError``; ``"means"`` decides with the midpoints of adjacent level
    means instead, sorted if even those cross.
    """
    y = subsample(trace, k) if isinstance(trace, ElectricalTrace) else np.asarray(trace, dtype=float)
    sym = _symbols(target)
    n_levels = n_levels or int(getattr(target, "n_levels", 0) or sym.max() + 1)
    bit_map = bit_map or getattr(target, "bit_map", "gray")
    if stats is None:
        stats = level_stats(y, target, n_levels)
    reps = len(y) // len(sym)
    if reps > 1:
        sym = np.tile(sym, reps)
    thr = thresholds(stats)
    if not thr.increasing and on_overlap == "means":
        mid = np.sort(0.5 * (stats.means[:-1] + stats.means[1:]))
        decided = np.searchsorted(mid, y, side="left")
    elif on_overlap in ("raise", "means"):
        decided = digitize(y, thr)
    else:
        raise ValueError(f"unknown on_overlap {on_overlap!r}")
    tx = demap_pam(sym, n_levels, bit_map)
    rx = demap_pam(decided, n_levels, bit_map)
    return BerResult(int(np.count_nonzero(tx != rx)), len(tx))


def eye_diagram(trace, n_sps: int, margin: int = 2) -> np.ndarray:
    """Fold the trace into one row per symbol, with ``margin`` extra samples each side."""
    x = np.asarray(getattr(trace, "samples", trace), dtype=float)
    if len(x) % n_sps:
        raise ValueError("trace length not divisible by samples per symbol")
    n_sym = len(x) // n_sps
    idx = (np.arange(n_sym)[:, None] * n_sps + np.arange(-margin, n_sps + margin)[None, :]) % len(x)
    return x[idx]


def export_grid(path, grid, header: str = "") -> None:
    np.savetxt(Path(path), np.asarray(grid), delimiter=",", fmt="%.9e", header=header)


def level_histograms(y_k, target, bins: int = 64) -> np.ndarray:
    """Histogram counts per level on a shared bin grid; first column is bin centres."""
    y = np.asarray(y_k, dtype=float)
    sym = _symbols(target)
    if len(y) != len(sym):
        sym = np.tile(sym, len(y) // len(sym))
    edges = np.linspace(y.min(), y.max(), bins + 1)
    cols = [0.5 * (edges[1:] + edges[:-1])]
    for n in range(int(sym.max()) + 1):
        cols.append(np.histogram(y[sym == n], edges)[0])
    return np.column_stack(cols)
