"""Scenario description and the end-to-end link simulator.

A :class:`Scenario` is a flat, unit-explicit record loadable from YAML.
:class:`Link` precomputes everything that does not depend on the PNN
weights or the noise realisation (transmitted spectrum, fiber mask, delay
ramps, receiver filters) so that one loss evaluation costs a handful of
FFTs.

Noise model: ASE-like complex noise is added to the field at the receiver
input and thermal noise to the photocurrent, both at fixed absolute
levels pinned by ``osnr_ref_db`` / ``esnr_ref_db`` at ``reference_prx_dbm``.
Traces are rescaled so that the nominal level spacing implied by their
mean power is 1; losses are then independent of the receiver gain and a
single-sample loss of -1 is a perfectly open, noiseless eye.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import pnn
from .channel import FiberSpec, NoiseSpec, fiber_transfer
from .detection import ElectricalTrace, find_alignment, receiver_response
from .metrics import ber as _ber
from .metrics import loss_l2
from .waveform import generate_prbs, map_pam, modulate


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str = "pam4_10gbd_125km"
    # transmitter
    baud_gbd: float = 10.0
    n_levels: int = 4
    bit_map: str = "gray"
    prbs_order: int = 10
    prbs_seed: int = 1
    n_symbols: int = 1024
    sps: int = 16
    scope_sps: int = 8
    tx_bandwidth_ghz: float | None = None
    pd_bandwidth_ghz: float | None = None
    scope_bandwidth_ghz: float | None = None
    # fiber
    length_km: float = 125.0
    spans_km: tuple = (0.0, 25.0, 50.0, 75.0, 100.0, 125.0)
    beta2_ps2_per_m: float = -0.021
    attenuation_db_per_km: float = 0.2
    # noise / receiver power
    osnr_ref_db: float = 44.0
    esnr_ref_db: float = 26.0
    reference_prx_dbm: float = 0.0
    prx_train_dbm: float = 0.0
    prx_grid_dbm: tuple = (-12.0, -10.0, -8.0, -6.0, -4.0, -2.0, 0.0)
    gain_mode: str = "fixed"
    # PNN
    n_channels: int = 8
    delay_ps: float = 25.0
    channel_loss: str = "device"
    delay_error: float = 0.0
    delay_error_seed: int = 0
    carrier_offset_ghz: float = 0.0
    weight_mode: str = "phase_only"
    # training
    strategy: str = "ST3"
    swarm_size: int = 30
    inertia: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    max_iter: int = 300
    tolerance: float = 0.02
    pso_patience: int = 15
    adam_patience: int = 10
    adam_lr: float = 0.1
    adam_max_iter: int = 300
    final_repeats: int = 20
    btb_weights: str | None = None
    # sweeps
    penalty_f_min_ghz: float = 0.05
    penalty_f_max_ghz: float = 15.0
    penalty_f_step_ghz: float = 0.05
    offset_span_ghz: float = 90.0
    offset_step_ghz: float = 1.0
    seed: int = 2024

    def __post_init__(self):
        if self.baud_gbd <= 0 or self.n_symbols < 1:
            raise ScenarioError("baud rate and symbol count must be positive")
        if self.sps % self.scope_sps:
            raise ScenarioError("internal samples/symbol must be a multiple of the scope samples/symbol")
        if self.weight_mode not in ("phase_only", "full"):
            raise ScenarioError(f"unknown weight_mode {self.weight_mode!r}")
        if self.gain_mode not in ("fixed", "auto"):
            raise ScenarioError(f"unknown gain_mode {self.gain_mode!r}")
        if self.channel_loss not in ("device", "lossless"):
            raise ScenarioError(f"unknown channel_loss {self.channel_loss!r}")
        if self.strategy not in ("ST1", "ST2", "ST3"):
            raise ScenarioError(f"unknown strategy {self.strategy!r}")
        if self.length_km < 0:
            raise ScenarioError("fiber length must be nonnegative")

    # derived quantities -------------------------------------------------
    @property
    def baud_rate(self) -> float:
        return self.baud_gbd * 1e9

    def _bw(self, value, ratio):
        return (value if value is not None else ratio * self.baud_gbd) * 1e9

    @property
    def tx_bandwidth_hz(self) -> float:
        return self._bw(self.tx_bandwidth_ghz, 2.0)

    @property
    def pd_bandwidth_hz(self) -> float:
        return self._bw(self.pd_bandwidth_ghz, 2.0)

    @property
    def scope_bandwidth_hz(self) -> float:
        return self._bw(self.scope_bandwidth_ghz, 1.6)

    @property
    def fiber(self) -> FiberSpec:
        return FiberSpec(self.length_km * 1e3, self.beta2_ps2_per_m, self.attenuation_db_per_km)

    def layout(self) -> pnn.PnnLayout:
        loss = None if self.channel_loss == "device" else (0.0,) * self.n_channels
        lay = pnn.PnnLayout(self.n_channels, self.delay_ps * 1e-12, loss)
        if self.delay_error > 0:
            lay = pnn.perturb_delays(lay, self.delay_error, self.delay_error_seed)
        return lay

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["spans_km"] = list(self.spans_km)
        d["prx_grid_dbm"] = list(self.prx_grid_dbm)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("spans_km", "prx_grid_dbm"):
            if key in data:
                data[key] = tuple(float(v) for v in data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ScenarioError(str(exc)) from exc


def load_scenario(path) -> Scenario:
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioError("scenario file must be a mapping")
    return Scenario.from_dict(data)


def dbm_to_mw(p_dbm: float) -> float:
    return 10 ** (p_dbm / 10)


def derive_seed(*keys) -> int:
    """Stable 63-bit seed from a tuple of nonnegative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(2, dtype=np.uint64)[0] >> 1)


class Link:
    """Transmitter -> PNN -> fiber -> noise -> detector -> scope.

    Parameters
    ----------
    scenario : Scenario
    layout : PnnLayout, optional
        Overrides the scenario's layout (ideal-phase benchmarks, heatmaps).
    length_km, carrier_offset_ghz : float, optional
        Per-link overrides of the scenario values.
    alignment : {"symbol", "sample"}
        Resolution of the trace alignment.

    Timing: the transmitted train is delayed so that symbol centres fall
    midway between scope samples ``k`` and ``k+1`` (``k = scope_sps/2``),
    and the nominal PNN latency (mean channel delay) is removed, as a
    receiver clock-recovery stage would.
    """

    def __init__(self, scenario: Scenario, layout: pnn.PnnLayout | None = None,
                 length_km: float | None = None, carrier_offset_ghz: float | None = None,
                 alignment: str = "symbol"):
        self.scenario = sc = scenario
        self.layout = layout if layout is not None else sc.layout()
        L = sc.length_km if length_km is None else length_km
        self.fiber = FiberSpec(L * 1e3, sc.beta2_ps2_per_m, sc.attenuation_db_per_km)
        self.carrier_offset_hz = (sc.carrier_offset_ghz if carrier_offset_ghz is None else carrier_offset_ghz) * 1e9

        bits = generate_prbs(sc.prbs_order, sc.prbs_seed, sc.n_symbols * int(np.log2(sc.n_levels)))
        self.target = map_pam(bits, sc.n_levels, sc.bit_map, sc.baud_rate)
        tx = modulate(self.target, sc.sps, sc.tx_bandwidth_hz)
        self.sample_rate = tx.sample_rate
        self.n = len(tx.samples)
        self.tx_power = tx.power
        self.decim = sc.sps // sc.scope_sps
        centre = ((sc.scope_sps // 2 + 0.5) * self.decim - (sc.sps - 1) / 2) / self.sample_rate
        self.omega = tx.omega()
        self.tx_spectrum = np.fft.fft(tx.samples) * np.exp(-1j * self.omega * centre)
        self.alignment = alignment
        self.fiber_mask = fiber_transfer(self.omega, self.fiber)
        self.bank = pnn.DelayBank(self.layout, self.omega, self.carrier_offset_hz)
        f_r = np.fft.rfftfreq(self.n, d=1 / self.sample_rate)
        self.rx_response = receiver_response(f_r, sc.pd_bandwidth_hz, sc.scope_bandwidth_hz)
        self.latency = np.exp(1j * self.omega * float(np.mean(self.layout.delays)))

        p_ref = dbm_to_mw(sc.reference_prx_dbm)
        self.optical_noise = NoiseSpec(sc.osnr_ref_db, "optical_awgn", reference_power_mw=p_ref)
        self.electrical_noise = NoiseSpec(sc.esnr_ref_db, "electrical_awgn", sc.scope_bandwidth_hz, p_ref)
        self.sigma_opt = self.optical_noise.noise_std(p_ref, self.sample_rate)
        self.sigma_el = self.electrical_noise.noise_std(p_ref, self.sample_rate)

        # fixed receiver gain: the reference PNN state (all channels open,
        # incoherent sum) is received at prx_train_dbm
        t_ref = float(np.sum(self.layout.losses**2)) / self.layout.n_channels**2
        self._ref_power = self.tx_power * t_ref * 10 ** (-self.fiber.loss_db / 10)

    # field ----------------------------------------------------------------
    def _pnn_response(self, weights: pnn.PnnWeights) -> np.ndarray:
        # repeated acquisitions with frozen weights reuse the last response
        key = (np.asarray(weights.amplitudes).tobytes(), np.asarray(weights.phases).tobytes())
        cached = getattr(self, "_cache", None)
        if cached is None or cached[0] != key:
            cached = (key, self.bank.response(weights) * self.latency)
            self._cache = cached
        return cached[1]

    def field_spectrum(self, weights: pnn.PnnWeights | None, fiber: bool = True) -> np.ndarray:
        spec = self.tx_spectrum
        if weights is not None:
            spec = spec * self._pnn_response(weights)
        if fiber:
            spec = spec * self.fiber_mask
        return spec

    def received_field(self, weights, fiber: bool = True) -> np.ndarray:
        return np.fft.ifft(self.field_spectrum(weights, fiber))

    # detection ------------------------------------------------------------
    def trace(self, weights, seed, prx_dbm: float | None = None, gain_mode: str | None = None,
              fiber: bool = True, noise: bool = True, align: bool = True) -> ElectricalTrace:
        """Aligned scope trace in units of the mean-power level spacing.

        ``gain_mode="fixed"`` scales the field by the gain that puts the
        reference PNN state at ``prx_dbm``; ``"auto"`` scales the actual
        field to ``prx_dbm`` (a power meter reading at the receiver).
        """
        sc = self.scenario
        prx_dbm = sc.prx_train_dbm if prx_dbm is None else prx_dbm
        gain_mode = gain_mode or sc.gain_mode
        p_rx = dbm_to_mw(prx_dbm)
        e = self.received_field(weights, fiber)
        if gain_mode == "fixed" and weights is not None:
            ref = self._ref_power if fiber else self._ref_power * 10 ** (self.fiber.loss_db / 10)
            e = e * np.sqrt(p_rx / ref)
        else:
            p = float(np.mean(np.abs(e) ** 2))
            if p <= 0:
                raise ValueError("no optical power reaches the receiver")
            e = e * np.sqrt(p_rx / p)
        if noise:
            rng = np.random.default_rng(seed)
            n = self.n
            e = e + (self.sigma_opt / np.sqrt(2)) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
            i = e.real**2 + e.imag**2 + self.sigma_el * rng.standard_normal(n)
        else:
            i = e.real**2 + e.imag**2
        i = np.fft.irfft(np.fft.rfft(i) * self.rx_response, n=self.n)[:: self.decim]
        # unit mean level spacing: equiprobable levels 0..P_peak have mean P_peak/2
        spacing = 2 * float(np.mean(i)) / (sc.n_levels - 1)
        tr = ElectricalTrace(i / spacing, self.sample_rate / self.decim, sc.scope_sps)
        if align:
            s = find_alignment(tr, self.target, resolution=self.alignment)
            tr = tr.replace(np.roll(tr.samples, -s))
        return tr

    def loss(self, weights, seed, prx_dbm: float | None = None, **kw) -> float:
        return loss_l2(self.trace(weights, seed, prx_dbm, **kw), self.target)

    def ber(self, weights, seed, prx_dbm: float | None = None, gain_mode: str = "auto",
            on_overlap: str = "means", **kw):
        """BER of one acquisition; closed eyes fall back to mean-midpoint thresholds."""
        return _ber(self.trace(weights, seed, prx_dbm, gain_mode=gain_mode, **kw), self.target,
                    on_overlap=on_overlap)
