"""Studies built on top of :class:`~cdpnn.scenario.Link`.

Every study returns a :class:`ResultTable` (named numeric columns plus a
metadata dict) that can be written as CSV with a JSON sidecar. Seeds are
derived per point from the root seed, so tables are reproducible bit for
bit and independent of evaluation order.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import optimize as opt
from . import pnn
from .channel import FiberSpec, cd_penalty_analytic, cd_penalty_measured, propagate
from .metrics import eye_diagram
from .scenario import Link, Scenario, derive_seed

log = logging.getLogger(__name__)

# seed stream tags for the studies
_BER, _FREQ, _HEAT, _TRAIN = 11, 12, 13, 14

IDEAL_512 = (512, 0.7812e-12)
HEATMAP_BUDGET = {"swarm_size": 20, "max_iter": 60}


@dataclass
class ResultTable:
    """Rectangular table of real columns with a metadata sidecar.

    ``metadata`` carries the scenario digest and seeds. A ``timestamp``
    entry is only added when explicitly requested so that repeated runs
    stay byte-identical.
    """

    name: str
    columns: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"table {self.name!r} is not rectangular: column lengths {sorted(lengths)}")

    def __len__(self):
        return len(next(iter(self.columns.values()), ()))

    def __getitem__(self, key) -> np.ndarray:
        return self.columns[key]

    def write(self, out_dir, timestamp: str | None = None) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / f"{self.name}.csv"
        names = list(self.columns)
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for row in zip(*(self.columns[k] for k in names)):
                w.writerow([repr(float(v)) for v in row])
        meta = dict(self.metadata)
        if timestamp is not None:
            meta["timestamp"] = timestamp
        json_path = out / f"{self.name}.json"
        json_path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n")
        return csv_path, json_path

    @classmethod
    def read(cls, csv_path) -> "ResultTable":
        p = Path(csv_path)
        with p.open() as fh:
            rows = list(csv.reader(fh))
        cols = {name: [float(r[i]) for r in rows[1:]] for i, name in enumerate(rows[0])}
        sidecar = p.with_suffix(".json")
        meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        return cls(p.stem, cols, meta)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _link(scenario_or_link) -> Link:
    return scenario_or_link if isinstance(scenario_or_link, Link) else Link(scenario_or_link)


def _meta(link: Link, **extra) -> dict:
    return {"scenario": link.scenario.name, "scenario_hash": link.scenario.digest(),
            "layout_hash": link.layout.digest(), "length_km": link.fiber.length_m / 1e3, **extra}


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainOutcome:
    weights: pnn.PnnWeights
    run: opt.TrainingRun
    table: ResultTable
    layout: pnn.PnnLayout


def train(scenario: Scenario | Link, seed: int | None = None, btb_params=None, workers: int = 1) -> TrainOutcome:
    """Train the PNN for ``scenario`` with its configured strategy.

    For ST2 without a stored back-to-back optimum, one is produced first by
    PSO on the 0 km link.
    """
    link = _link(scenario)
    sc = link.scenario
    seed = sc.seed if seed is None else seed
    space = opt.ParameterSpace(link.layout.n_channels, sc.weight_mode)
    if sc.strategy == "ST2" and btb_params is None:
        if sc.btb_weights:
            w, _, _ = pnn.load_weights(sc.btb_weights)
            btb_params = space.from_weights(w)
        else:
            btb = opt.run_strategy("ST3", Link(sc, layout=link.layout, length_km=0.0),
                                   derive_seed(_TRAIN, seed), workers=workers, space=space)
            btb_params = btb.final_params
    run = opt.run_strategy(sc.strategy, link, seed, btb_params=btb_params, workers=workers, space=space)
    w = space.to_weights(run.final_params)
    table = ResultTable(
        "weights",
        {"channel": np.arange(1, len(w) + 1), "amplitude": w.amplitudes, "phase_rad": w.phases,
         "delay_ps": link.layout.delays * 1e12},
        _meta(link, seed=seed, strategy=sc.strategy, sum_amplitudes=float(np.sum(w.amplitudes)),
              final_loss_mean=run.final_loss_mean, final_loss_std=run.final_loss_std,
              evaluations=run.evaluation_count, stopping_cause=run.stopping_cause),
    )
    log.info("trained %s at %.0f km: L2 %.3f +- %.3f after %d evaluations", sc.strategy,
             link.fiber.length_m / 1e3, run.final_loss_mean, run.final_loss_std, run.evaluation_count)
    return TrainOutcome(w, run, table, link.layout)


# ---------------------------------------------------------------------------
# BER versus received power

def poisson_interval(errors: int, level: float = 0.68) -> tuple[float, float]:
    """Credible interval on a Poisson mean under a flat prior.

    Central for ``errors > 0``; one-sided ``[0, upper]`` at zero errors.
    """
    post = stats.gamma(errors + 1)
    if errors == 0:
        return 0.0, float(post.ppf(level))
    tail = (1 - level) / 2
    return float(post.ppf(tail)), float(post.ppf(1 - tail))


def ber_vs_prx(scenario: Scenario | Link, weights: pnn.PnnWeights | None, prx_grid_dbm=None,
               repeats: int = 50, seed: int | None = None, gain_mode: str = "auto",
               name: str = "ber_vs_prx") -> ResultTable:
    """Average BER over ``repeats`` noise realisations at each receiver power.

    ``ber`` pools the error counts (equal to the mean of per-acquisition
    BERs); with zero errors it reports the floor ``1/bits`` instead of 0.
    """
    link = _link(scenario)
    sc = link.scenario
    seed = sc.seed if seed is None else seed
    grid = np.asarray(sc.prx_grid_dbm if prx_grid_dbm is None else prx_grid_dbm, dtype=float)
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    cols = {k: [] for k in ("prx_dbm", "ber", "ber_lo", "ber_hi", "errors", "bits", "at_floor")}
    for i, p in enumerate(grid):
        errors = bits = 0
        for r in range(repeats):
            res = link.ber(weights, derive_seed(_BER, seed, i, r), prx_dbm=float(p), gain_mode=gain_mode)
            errors += res.errors
            bits += res.n_bits
        lo, hi = poisson_interval(errors)
        cols["prx_dbm"].append(p)
        cols["ber"].append(errors / bits if errors else 1 / bits)
        cols["ber_lo"].append(lo / bits)
        cols["ber_hi"].append(hi / bits)
        cols["errors"].append(errors)
        cols["bits"].append(bits)
        cols["at_floor"].append(float(errors == 0))
    return ResultTable(name, cols, _meta(link, seed=seed, repeats=repeats, gain_mode=gain_mode,
                                         equalized=weights is not None))


# ---------------------------------------------------------------------------
# small-signal power penalty

def first_notch(f, penalty_db, threshold_db: float = 10.0) -> float:
    """Frequency of the peak of the first lobe exceeding ``threshold_db`` (nan if none)."""
    p = np.asarray(penalty_db, dtype=float)
    above = np.flatnonzero(p > threshold_db)
    if not len(above):
        return float("nan")
    start = above[0]
    stop = start
    while stop + 1 < len(p) and p[stop + 1] > threshold_db:
        stop += 1
    return float(np.asarray(f)[start + int(np.argmax(p[start:stop + 1]))])


def penalty_sweep(scenario: Scenario, weights: pnn.PnnWeights | None = None, f_grid_ghz=None,
                  layout: pnn.PnnLayout | None = None, length_km: float | None = None) -> ResultTable:
    """Four penalty curves: back-to-back, bare fiber, fiber + PNN, PNN alone.

    The PNN curves are NaN when no weights are given. ``analytic_db`` is the
    closed-form bare-fiber penalty.
    """
    sc = scenario
    layout = layout or sc.layout()
    fiber = FiberSpec((sc.length_km if length_km is None else length_km) * 1e3,
                      sc.beta2_ps2_per_m, sc.attenuation_db_per_km)
    if f_grid_ghz is None:
        n = int(round((sc.penalty_f_max_ghz - sc.penalty_f_min_ghz) / sc.penalty_f_step_ghz)) + 1
        f_grid_ghz = sc.penalty_f_min_ghz + sc.penalty_f_step_ghz * np.arange(n)
    f = np.round(np.asarray(f_grid_ghz, dtype=float), 9)
    w = 2 * np.pi * f * 1e9
    step_hz = float(np.gcd.reduce(np.round(f * 1e3).astype(np.int64))) * 1e6
    # the detected tone and its harmonic must stay well inside Nyquist
    fs = step_hz * np.ceil(max(160e9, 8 * float(f.max()) * 1e9) / step_hz)
    kw = {"sample_rate": fs, "resolution_hz": step_hz}
    nan = np.full(len(f), np.nan)
    cols = {
        "f_ghz": f,
        "btb_db": cd_penalty_measured(lambda e: e, w, **kw),
        "fiber_db": cd_penalty_measured(lambda e: propagate(e, fiber), w, **kw),
        "fiber_pnn_db": nan,
        "pnn_db": nan,
        "analytic_db": cd_penalty_analytic(fiber, w),
    }
    if weights is not None:
        cols["fiber_pnn_db"] = cd_penalty_measured(lambda e: propagate(pnn.apply(e, layout, weights), fiber), w, **kw)
        cols["pnn_db"] = cd_penalty_measured(lambda e: pnn.apply(e, layout, weights), w, **kw)
    meta = {"scenario": sc.name, "scenario_hash": sc.digest(), "length_km": fiber.length_m / 1e3,
            "notch_fiber_ghz": first_notch(f, cols["fiber_db"]),
            "notch_fiber_pnn_ghz": first_notch(f, cols["fiber_pnn_db"]) if weights is not None else None}
    return ResultTable("penalty", cols, meta)


# ---------------------------------------------------------------------------
# carrier-frequency sweep

def autocorrelation(x) -> np.ndarray:
    """Biased sample autocorrelation r(k) = sum x_t x_{t+k} / sum x_t^2 of the demeaned series."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = len(x)
    denom = float(np.dot(x, x))
    if denom == 0:
        return np.ones(n)
    return np.array([np.dot(x[: n - k], x[k:]) for k in range(n)]) / denom


def dominant_lag(x) -> int:
    """Lag of the autocorrelation maximum after its first zero crossing (0 if none)."""
    r = autocorrelation(x)
    neg = np.flatnonzero(r < 0)
    if not len(neg):
        return 0
    z = int(neg[0])
    return z + int(np.argmax(r[z:]))


def frequency_sweep(scenario: Scenario, weights: pnn.PnnWeights, offsets_ghz=None, repeats: int = 20,
                    seed: int | None = None, layout: pnn.PnnLayout | None = None) -> ResultTable:
    """Loss versus carrier offset with frozen weights (mean and std over seeds)."""
    sc = scenario
    seed = sc.seed if seed is None else seed
    layout = layout or sc.layout()
    if offsets_ghz is None:
        n = int(round(2 * sc.offset_span_ghz / sc.offset_step_ghz)) + 1
        offsets_ghz = -sc.offset_span_ghz + sc.offset_step_ghz * np.arange(n)
    offs = np.asarray(offsets_ghz, dtype=float)
    mean, std = [], []
    for i, fo in enumerate(offs):
        link = Link(sc, layout=layout, carrier_offset_ghz=float(fo))
        vals = [link.loss(weights, derive_seed(_FREQ, seed, i, r)) for r in range(repeats)]
        mean.append(np.mean(vals))
        std.append(np.std(vals))
    step = float(np.median(np.diff(offs))) if len(offs) > 1 else 0.0
    lag = dominant_lag(mean) if len(offs) > 2 else 0
    meta = {"scenario": sc.name, "scenario_hash": sc.digest(), "layout_hash": layout.digest(),
            "seed": seed, "repeats": repeats, "fsr_ghz": layout.fsr_hz / 1e9,
            "dominant_period_ghz": lag * step}
    return ResultTable("freq_sweep", {"offset_ghz": offs, "loss_mean": mean, "loss_std": std}, meta)


# ---------------------------------------------------------------------------
# scalability heatmap

def heatmap_scenarios(base: Scenario | None = None) -> list[Scenario]:
    """The three baud/length pairs of the scalability study, bandwidths scaled with baud."""
    base = base or Scenario()
    return [base.replace(name=f"pam4_{b:g}gbd_{L:g}km", baud_gbd=b, length_km=L)
            for b, L in ((10.0, 200.0), (20.0, 80.0), (50.0, 10.0))]


def heatmap_scan(scenarios, n_grid=(2, 4, 8, 16), dt_grid_ps=(2.5, 5.0, 10.0, 20.0), seed: int | None = None,
                 swarm_size: int = HEATMAP_BUDGET["swarm_size"], max_iter: int = HEATMAP_BUDGET["max_iter"],
                 repeats: int = 5, workers: int = 1) -> ResultTable:
    """Train a lossless PO-mode PNN for every (N, dt) cell and record its final loss.

    The PSO budget is reduced (swarm 20, 60 iterations by default) to keep
    the scan at desk scale. ``eq2_ok`` marks cells whose window ``N dt``
    covers the required window ``1/B + |beta2 L 2 pi B|``. A single-channel
    cell is not trained (there are no free phases).
    """
    if isinstance(scenarios, Scenario):
        scenarios = [scenarios]
    if not len(scenarios) or not len(n_grid) or not len(dt_grid_ps):
        raise ValueError("heatmap grids must be nonempty")
    cols = {k: [] for k in ("baud_gbd", "length_km", "n_channels", "delay_ps", "window_ps",
                            "eq2_window_ps", "eq2_ok", "loss_mean", "loss_std", "evaluations")}
    root = scenarios[0].seed if seed is None else seed
    for si, sc0 in enumerate(scenarios):
        sc = sc0.replace(weight_mode="phase_only", strategy="ST3", swarm_size=swarm_size,
                         max_iter=max_iter, final_repeats=repeats)
        eq2 = pnn.eq2_window_s(sc.baud_rate, sc.fiber)
        for n in n_grid:
            for di, dt in enumerate(dt_grid_ps):
                layout = pnn.PnnLayout(int(n), dt * 1e-12, (0.0,) * int(n))
                link = Link(sc, layout=layout)
                cell_seed = derive_seed(_HEAT, root, si, int(n), di)
                if n == 1:
                    w = pnn.PnnWeights.open([0.0])
                    vals = [link.loss(w, derive_seed(cell_seed, r)) for r in range(repeats)]
                    m, s, evals = float(np.mean(vals)), float(np.std(vals)), 0
                else:
                    run = opt.run_strategy("ST3", link, cell_seed, workers=workers)
                    m, s, evals = run.final_loss_mean, run.final_loss_std, run.evaluation_count
                window = n * dt * 1e-12
                for k, v in (("baud_gbd", sc.baud_gbd), ("length_km", sc.length_km), ("n_channels", n),
                             ("delay_ps", dt), ("window_ps", window * 1e12), ("eq2_window_ps", eq2 * 1e12),
                             ("eq2_ok", float(window >= eq2 - 1e-18)), ("loss_mean", m), ("loss_std", s),
                             ("evaluations", evals)):
                    cols[k].append(v)
                log.info("heatmap %s N=%d dt=%.2f ps: L2 %.3f", sc.name, n, dt, m)
    meta = {"scenarios": [s.name for s in scenarios], "scenario_hashes": [s.digest() for s in scenarios],
            "seed": root, "swarm_size": swarm_size, "max_iter": max_iter, "repeats": repeats}
    return ResultTable("heatmap", cols, meta)


# ---------------------------------------------------------------------------
# ideal phases versus training

@dataclass
class IdealComparison:
    table: ResultTable
    eyes: dict


def ideal_vs_trained(scenario: Scenario, trained: pnn.PnnWeights, prx_grid_dbm=None, repeats: int = 50,
                     seed: int | None = None, eye_prx_dbm: float = 0.0) -> IdealComparison:
    """BER curves of the trained 8-tap PNN, the ideal-phase 8-tap and 512-tap PNNs, and no PNN.

    The ideal-phase devices have fully open amplitudes; the 512-tap device
    is lossless. Eye matrices (one row per symbol) are taken at ``eye_prx_dbm``.
    """
    sc = scenario
    seed = sc.seed if seed is None else seed
    link8 = Link(sc)
    lay512 = pnn.PnnLayout(IDEAL_512[0], IDEAL_512[1], (0.0,) * IDEAL_512[0])
    link512 = Link(sc, layout=lay512)
    cases = {
        "trained8": (link8, trained),
        "ideal8": (link8, pnn.PnnWeights.open(pnn.ideal_phases(link8.layout, link8.fiber))),
        "ideal512": (link512, pnn.PnnWeights.open(pnn.ideal_phases(lay512, link512.fiber))),
        "unequalized": (link8, None),
    }
    cols, eyes = {}, {}
    for name, (link, w) in cases.items():
        t = ber_vs_prx(link, w, prx_grid_dbm, repeats, seed)
        cols.setdefault("prx_dbm", t["prx_dbm"])
        cols[f"ber_{name}"] = t["ber"]
        cols[f"ber_hi_{name}"] = t["ber_hi"]
        tr = link.trace(w, derive_seed(_BER, seed, 999), prx_dbm=eye_prx_dbm, gain_mode="auto")
        eyes[name] = eye_diagram(tr, tr.samples_per_symbol)
    meta = _meta(link8, seed=seed, repeats=repeats, eye_prx_dbm=eye_prx_dbm,
                 ideal512_layout_hash=lay512.digest())
    return IdealComparison(ResultTable("ideal_compare", cols, meta), eyes)
