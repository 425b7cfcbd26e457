"""Time-delayed complex perceptron: an N-tap optical FIR filter.

Each channel carries a delayed copy ``x(t - tau_i)`` weighted by
``k_i a_i exp(j phi_i)``; the 1xN splitter and Nx1 combiner trees
contribute an overall amplitude factor ``1/N``. Delays are applied as
frequency-domain phase ramps, which is exact for periodic signals.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import FiberSpec
from .waveform import ComplexEnvelope

# Measured excess loss of channels 1..8 of the fabricated device, dB.
DEVICE_CHANNEL_LOSS_DB = (-19.0, -15.5, -14.8, -14.7, -21.4, -16.0, -18.0, -20.0)
C_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class PnnLayout:
    n_channels: int = 8
    delay_unit_s: float = 25e-12
    channel_loss_db: tuple | None = None
    channel_delays_s: tuple | None = None
    group_index: float = 4.237

    def __post_init__(self):
        n = self.n_channels
        if n < 1:
            raise ValueError("need at least one channel")
        if self.delay_unit_s <= 0:
            raise ValueError("delay unit must be positive")
        if self.channel_loss_db is None:
            loss = DEVICE_CHANNEL_LOSS_DB if n == 8 else (0.0,) * n
            object.__setattr__(self, "channel_loss_db", tuple(loss))
        if self.channel_delays_s is None:
            object.__setattr__(self, "channel_delays_s", tuple(i * self.delay_unit_s for i in range(n)))
        object.__setattr__(self, "channel_loss_db", tuple(float(v) for v in self.channel_loss_db))
        object.__setattr__(self, "channel_delays_s", tuple(float(v) for v in self.channel_delays_s))
        if len(self.channel_loss_db) != n or len(self.channel_delays_s) != n:
            raise ValueError("loss and delay arrays must have one entry per channel")
        if any(v > 0 for v in self.channel_loss_db):
            raise ValueError("channel losses must be <= 0 dB")
        d = np.asarray(self.channel_delays_s)
        if d[0] != 0 or np.any(np.diff(d) < 0):
            raise ValueError("delays must start at 0 and be nondecreasing")

    @property
    def delays(self) -> np.ndarray:
        return np.asarray(self.channel_delays_s)

    @property
    def losses(self) -> np.ndarray:
        """Linear field factors k_i."""
        return 10 ** (np.asarray(self.channel_loss_db) / 20)

    @property
    def spiral_length_m(self) -> float:
        """Waveguide length giving one delay unit at the group index."""
        return C_LIGHT * self.delay_unit_s / self.group_index

    @property
    def fsr_hz(self) -> float:
        return 1 / self.delay_unit_s

    def lossless(self) -> "PnnLayout":
        return PnnLayout(self.n_channels, self.delay_unit_s, (0.0,) * self.n_channels,
                         self.channel_delays_s, self.group_index)

    def digest(self) -> str:
        payload = json.dumps([self.n_channels, self.delay_unit_s, self.channel_loss_db,
                              self.channel_delays_s, self.group_index])
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class PnnWeights:
    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        a = np.clip(np.asarray(self.amplitudes, dtype=float), 0.0, 1.0)
        p = np.asarray(self.phases, dtype=float)
        if a.shape != p.shape or a.ndim != 1:
            raise ValueError("amplitudes and phases must be 1-D arrays of equal length")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "phases", p)

    def __len__(self):
        return len(self.amplitudes)

    @classmethod
    def open(cls, phases) -> "PnnWeights":
        p = np.asarray(phases, dtype=float)
        return cls(np.ones_like(p), p)

    @classmethod
    def single_channel(cls, n: int, channel: int = 0) -> "PnnWeights":
        a = np.zeros(n)
        a[channel] = 1.0
        return cls(a, np.zeros(n))

    def coefficients(self, layout: PnnLayout) -> np.ndarray:
        if len(self) != layout.n_channels:
            raise ValueError(f"{len(self)} weights for a {layout.n_channels}-channel layout")
        return layout.losses * self.amplitudes * np.exp(1j * self.phases)

    def referenced(self) -> np.ndarray:
        """Phases relative to channel 1, wrapped to [0, 2pi)."""
        return np.mod(self.phases - self.phases[0], 2 * np.pi)


@dataclass(frozen=True)
class HeaterCalibration:
    """Quadratic heater law phi = alpha I^2 + beta, per heater."""

    alpha: np.ndarray
    beta: np.ndarray
    max_current_ma: float = 20.0

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        b = np.asarray(self.beta, dtype=float)
        if a.shape != b.shape:
            raise ValueError("alpha and beta must match")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))) or np.any(a <= 0):
            raise ValueError("alpha must be positive and finite, beta finite")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    def phase(self, currents_ma) -> np.ndarray:
        i = np.asarray(currents_ma, dtype=float)
        return self.alpha * i**2 + self.beta

    def current_for_phase(self, phase) -> np.ndarray:
        """Smallest nonnegative current reaching ``phase`` modulo 2pi."""
        d = np.mod(np.asarray(phase, dtype=float) - self.beta, 2 * np.pi)
        return np.sqrt(d / self.alpha)


def frequency_response(layout: PnnLayout, weights: PnnWeights, omega, carrier_offset_hz: float = 0.0) -> np.ndarray:
    """H(w) = (1/N) sum_i c_i exp(-j (w + 2pi f_off) tau_i).

    ``omega`` are baseband angular frequencies (rad/s, numpy FFT sign
    convention, so a delay tau is ``exp(-j w tau)``).
    """
    c = weights.coefficients(layout) / layout.n_channels
    w = np.asarray(omega, dtype=float) + 2 * np.pi * carrier_offset_hz
    tau = layout.delays
    out = np.zeros(w.shape, dtype=complex)
    # chunk over channels so 512-tap layouts stay within memory
    for lo in range(0, len(tau), 64):
        hi = lo + 64
        out += c[lo:hi] @ np.exp(-1j * np.outer(tau[lo:hi], w))
    return out


class DelayBank:
    """Precomputed per-channel phase ramps on a fixed frequency grid.

    ``response(weights)`` equals :func:`frequency_response` but reuses the
    ramp matrix, which is what the training loop needs.
    """

    def __init__(self, layout: PnnLayout, omega, carrier_offset_hz: float = 0.0):
        self.layout = layout
        self.omega = np.asarray(omega, dtype=float)
        self.carrier_offset_hz = carrier_offset_hz
        w = self.omega + 2 * np.pi * carrier_offset_hz
        self._ramps = np.exp(-1j * np.outer(layout.delays, w)) if layout.n_channels <= 64 else None

    def response(self, weights: PnnWeights) -> np.ndarray:
        if self._ramps is None:
            return frequency_response(self.layout, weights, self.omega, self.carrier_offset_hz)
        return (weights.coefficients(self.layout) / self.layout.n_channels) @ self._ramps


def apply(env: ComplexEnvelope, layout: PnnLayout, weights: PnnWeights) -> ComplexEnvelope:
    """Filter ``env`` through the perceptron (circular delays)."""
    if len(weights) != layout.n_channels:
        raise ValueError(f"{len(weights)} weights for a {layout.n_channels}-channel layout")
    h = frequency_response(layout, weights, env.omega(), env.carrier_offset_hz)
    return env.replace(np.fft.ifft(np.fft.fft(env.samples) * h))


def ideal_phases(layout: PnnLayout, fiber: FiberSpec) -> np.ndarray:
    """Phases sampling the chirp that inverts the fiber dispersion mask.

    ``phi_i = +(tau_i - tau_ref)^2 / (2 beta2 L)`` with the reference at
    channel N/2 (1-based). The sign is the one that conjugates the fiber's
    impulse-response chirp under the conventions of :func:`apply` and
    :func:`cdpnn.channel.fiber_transfer`; amplitudes are implied fully open.
    """
    b2l = fiber.beta2_l
    if b2l == 0:
        raise ValueError("ideal phases are singular for zero dispersion")
    ref = max(layout.n_channels // 2 - 1, 0)
    rel = layout.delays - layout.delays[ref]
    return rel**2 / (2 * b2l)


def required_taps(baud_rate: float, fiber: FiberSpec, delay_unit_s: float,
                  bandwidth_rad_s: float | None = None) -> int:
    """int((1/B + |L beta2 dw|) / dt), with dw defaulting to 2 pi B."""
    if baud_rate <= 0 or delay_unit_s <= 0:
        raise ValueError("baud rate and delay unit must be positive")
    dw = 2 * np.pi * baud_rate if bandwidth_rad_s is None else bandwidth_rad_s
    window = 1 / baud_rate + abs(fiber.beta2_l * dw)
    return int(window / delay_unit_s + 1e-9)


def eq2_window_s(baud_rate: float, fiber: FiberSpec, bandwidth_rad_s: float | None = None) -> float:
    dw = 2 * np.pi * baud_rate if bandwidth_rad_s is None else bandwidth_rad_s
    return 1 / baud_rate + abs(fiber.beta2_l * dw)


def currents_to_weights(mzi_currents_ma, phasor_currents_ma, mzi_calib: HeaterCalibration,
                        phasor_calib: HeaterCalibration) -> tuple[PnnWeights, bool]:
    """Heater currents to weights.

    MZI aperture is the balanced-interferometer transmittance
    ``sin^2(theta/2)`` of its heater phase; phasors give ``phi_i`` directly.
    Currents outside ``[0, max_current_ma]`` are clamped and flagged.
    """
    im = np.asarray(mzi_currents_ma, dtype=float)
    ip = np.asarray(phasor_currents_ma, dtype=float)
    clamped = False
    cm = np.clip(im, 0, mzi_calib.max_current_ma)
    cp = np.clip(ip, 0, phasor_calib.max_current_ma)
    if np.any(cm != im) or np.any(cp != ip):
        clamped = True
        warnings.warn("heater current outside compliance range, clamped", RuntimeWarning, stacklevel=2)
    theta = mzi_calib.phase(cm)
    return PnnWeights(np.sin(theta / 2) ** 2, phasor_calib.phase(cp)), clamped


def _spiral_ids(n_channels: int):
    """For each channel, the physical spirals on its path as (level, prefix).

    The splitter is a binary tree: channel j passes the spiral of length
    2**b delay units for every set bit b of j, and that spiral is shared by
    all channels agreeing with j above bit b.
    """
    nbits = max(1, math.ceil(math.log2(n_channels)))
    return [[(b, j >> (b + 1)) for b in range(nbits) if (j >> b) & 1] for j in range(n_channels)]


def perturb_delays(layout: PnnLayout, relative_error: float, rng_seed) -> PnnLayout:
    """Scale every physical spiral by an independent (1 + eps), eps ~ U(-r, r)."""
    if not 0 <= relative_error < 1:
        raise ValueError("relative_error must be in [0, 1)")
    if relative_error == 0:
        return layout
    rng = np.random.default_rng(rng_seed)
    paths = _spiral_ids(layout.n_channels)
    spirals = sorted({s for p in paths for s in p})
    eps = dict(zip(spirals, rng.uniform(-relative_error, relative_error, len(spirals))))
    delays = tuple(sum((2**b) * layout.delay_unit_s * (1 + eps[(b, pre)]) for b, pre in p) for p in paths)
    return PnnLayout(layout.n_channels, layout.delay_unit_s, layout.channel_loss_db, delays, layout.group_index)


def save_weights(path, weights: PnnWeights, layout: PnnLayout, metadata: dict | None = None) -> None:
    doc = {
        "amplitudes": [float(v) for v in weights.amplitudes],
        "phases_rad": [float(v) for v in weights.phases],
        "layout_hash": layout.digest(),
        "layout": {
            "n_channels": layout.n_channels,
            "delay_unit_s": layout.delay_unit_s,
            "channel_loss_db": list(layout.channel_loss_db),
            "channel_delays_s": list(layout.channel_delays_s),
            "group_index": layout.group_index,
        },
        "training": metadata or {},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_weights(path) -> tuple[PnnWeights, PnnLayout, dict]:
    doc = json.loads(Path(path).read_text())
    lay = doc["layout"]
    layout = PnnLayout(lay["n_channels"], lay["delay_unit_s"], tuple(lay["channel_loss_db"]),
                       tuple(lay["channel_delays_s"]), lay["group_index"])
    if doc.get("layout_hash") not in (None, layout.digest()):
        raise ValueError("layout hash mismatch in weight file")
    return PnnWeights(doc["amplitudes"], doc["phases_rad"]), layout, doc.get("training", {})
