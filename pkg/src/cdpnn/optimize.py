"""Black-box training of the PNN weights.

Objectives are called as ``objective(x, seed) -> float``; the seed selects
the noise realisation, so the same ``(x, seed)`` always gives the same
value. Seeds are derived from the optimizer's root seed and the
(iteration, candidate) position, which keeps runs reproducible regardless
of the order in which a batch is evaluated.
"""
from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import pnn
from .scenario import Link, Scenario, derive_seed

Objective = Callable[[np.ndarray, int], float]

# seed stream tags
_PSO, _ADAM, _FINAL, _STARTS = 1, 2, 3, 4


@dataclass
class TrainingRun:
    best_loss_history: list
    evaluation_count: int
    final_params: list
    stopping_cause: str
    final_loss_mean: float = float("nan")
    final_loss_std: float = float("nan")
    wall_time_s: float = 0.0
    seed: int = 0
    config: dict = field(default_factory=dict)

    def to_json(self, path=None, include_wall_time: bool = True) -> str:
        d = asdict(self)
        if not include_wall_time:
            d.pop("wall_time_s")
        text = json.dumps(d, indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text: str) -> "TrainingRun":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 30
    inertia: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    max_iter: int = 300
    tolerance: float = 0.02
    patience: int = 15
    seed: int = 0


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    fd_step: float | Sequence[float] | None = None
    max_iter: int = 300
    tolerance: float = 0.02
    patience: int = 10
    seed: int = 0


class ParameterSpace:
    """Maps an optimisation vector to PNN weights.

    ``phase_only``: N-1 phases (channel 1 is the unconnected reference),
    amplitudes fully open. ``full``: N-1 phases followed by N amplitudes.
    With ``calibration`` (a pair of HeaterCalibration for MZIs and phasors)
    the vector holds heater currents in mA instead of phases/amplitudes.

    ``periodic`` flags the coordinates that live on a circle (phases in
    weight space); optimizers wrap those instead of clamping them.
    """

    def __init__(self, n_channels: int, mode: str = "phase_only", calibration=None):
        if mode not in ("phase_only", "full"):
            raise ValueError(f"unknown mode {mode!r}")
        self.n = n_channels
        self.mode = mode
        self.calibration = calibration
        n_ph = n_channels - 1
        self.dim = n_ph if mode == "phase_only" else n_ph + n_channels
        if calibration is None:
            lo = [-np.pi] * n_ph + [0.0] * (self.dim - n_ph)
            hi = [np.pi] * n_ph + [1.0] * (self.dim - n_ph)
        else:
            mzi, ph = calibration
            lo = [0.0] * self.dim
            hi = [ph.max_current_ma] * n_ph + [mzi.max_current_ma] * (self.dim - n_ph)
        self.bounds = np.array([lo, hi], dtype=float).T
        self.periodic = np.zeros(self.dim, dtype=bool)
        if calibration is None:
            self.periodic[:n_ph] = True

    def to_weights(self, x) -> pnn.PnnWeights:
        x = np.asarray(x, dtype=float)
        n_ph = self.n - 1
        if self.calibration is None:
            phases = np.concatenate(([0.0], x[:n_ph]))
            amps = np.ones(self.n) if self.mode == "phase_only" else x[n_ph:]
            return pnn.PnnWeights(amps, phases)
        mzi, ph = self.calibration
        phasor_i = np.concatenate(([0.0], x[:n_ph]))
        mzi_i = x[n_ph:] if self.mode == "full" else mzi.current_for_phase(np.full(self.n, np.pi))
        w, _ = pnn.currents_to_weights(mzi_i, phasor_i, mzi, ph)
        return pnn.PnnWeights(w.amplitudes, w.phases - w.phases[0])

    def from_weights(self, weights: pnn.PnnWeights) -> np.ndarray:
        if self.calibration is not None:
            raise NotImplementedError("inverse map is only defined in weight space")
        ph = np.angle(np.exp(1j * (weights.phases[1:] - weights.phases[0])))
        return ph if self.mode == "phase_only" else np.concatenate((ph, weights.amplitudes))

    def random(self, rng, size=None) -> np.ndarray:
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        shape = (self.dim,) if size is None else (size, self.dim)
        return lo + (hi - lo) * rng.random(shape)


def evaluate_objective(params, scenario: Scenario | Link, rng_seed, space: ParameterSpace | None = None) -> float:
    """One noisy measurement of L2 for the given parameter vector."""
    link = scenario if isinstance(scenario, Link) else Link(scenario)
    space = space or ParameterSpace(link.layout.n_channels, link.scenario.weight_mode)
    return link.loss(space.to_weights(params), rng_seed)


def make_objective(link: Link, space: ParameterSpace) -> Objective:
    def objective(x, seed):
        return link.loss(space.to_weights(x), seed)
    return objective


def _periodic_mask(periodic, dim: int) -> np.ndarray:
    if periodic is None:
        return np.zeros(dim, dtype=bool)
    mask = np.asarray(periodic, dtype=bool)
    if mask.shape != (dim,):
        raise ValueError("periodic mask must have one entry per coordinate")
    return mask


def _confine(x, lo, hi, periodic):
    """Clamp ordinary coordinates; wrap periodic ones into [lo, hi)."""
    wrapped = lo + np.mod(x - lo, hi - lo)
    return np.where(periodic, wrapped, np.clip(x, lo, hi))


def _displacement(target, x, span, periodic):
    """target - x, taking the short way round on periodic coordinates."""
    d = target - x
    return np.where(periodic, d - span * np.round(d / span), d)


class _Evaluator:
    def __init__(self, objective: Objective, bounds, workers: int = 1):
        self.objective = objective
        self.lo = np.asarray(bounds, float)[:, 0]
        self.hi = np.asarray(bounds, float)[:, 1]
        self.workers = workers
        self.count = 0

    def __call__(self, xs: np.ndarray, seeds: Sequence[int]) -> np.ndarray:
        xs = np.atleast_2d(xs)
        if np.any(xs < self.lo - 1e-12) or np.any(xs > self.hi + 1e-12):
            raise AssertionError("candidate outside bounds")
        self.count += len(xs)
        if self.workers > 1 and len(xs) > 1:
            with ThreadPoolExecutor(self.workers) as ex:
                return np.fromiter(ex.map(self.objective, xs, seeds), float, len(xs))
        return np.array([self.objective(x, s) for x, s in zip(xs, seeds)], dtype=float)


class _StopRule:
    """Stop after ``patience`` consecutive iterations without a gain > ``tol``.

    Gains are measured against the best value at the last reset.
    """

    def __init__(self, tol: float, patience: int, start: float):
        self.tol, self.patience = tol, patience
        self.ref = start
        self.stale = 0

    def update(self, best: float) -> bool:
        if self.ref - best > self.tol:
            self.ref = best
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def pso_minimize(objective: Objective, bounds, config: PsoConfig = PsoConfig(), workers: int = 1,
                 init=None, periodic=None) -> TrainingRun:
    """Global-best particle swarm with constriction-type coefficients.

    Positions are clamped to ``bounds`` after every move, except that
    coordinates flagged in ``periodic`` wrap around and are attracted
    along the shorter arc. Velocities are limited to the coordinate range.
    Iteration 0 evaluates the initial swarm; each later iteration moves and
    re-evaluates every particle. ``init`` optionally fixes some initial
    positions (rows).
    """
    if config.swarm_size < 2:
        raise ValueError("swarm needs at least two particles")
    t0 = time.perf_counter()
    bounds = np.asarray(bounds, float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    span = hi - lo
    dim = len(lo)
    periodic = _periodic_mask(periodic, dim)
    rng = np.random.default_rng(derive_seed(_PSO, config.seed))
    ev = _Evaluator(objective, bounds, workers)
    m = config.swarm_size

    x = lo + span * rng.random((m, dim))
    if init is not None:
        init = np.atleast_2d(_confine(np.asarray(init, float), lo, hi, periodic))
        x[: len(init)] = init[:m]
    v = 0.1 * span * (2 * rng.random((m, dim)) - 1)
    f = ev(x, [derive_seed(_PSO, config.seed, 0, p) for p in range(m)])
    pbest, pbest_f = x.copy(), f.copy()
    g = int(np.argmin(f))
    gbest, gbest_f = x[g].copy(), float(f[g])
    history = [gbest_f]
    stop = _StopRule(config.tolerance, config.patience, gbest_f)
    cause = "max_iter"
    for it in range(1, config.max_iter + 1):
        r1, r2 = rng.random((m, dim)), rng.random((m, dim))
        v = (config.inertia * v + config.c1 * r1 * _displacement(pbest, x, span, periodic)
             + config.c2 * r2 * _displacement(gbest, x, span, periodic))
        v = np.clip(v, -span, span)
        x = _confine(x + v, lo, hi, periodic)
        f = ev(x, [derive_seed(_PSO, config.seed, it, p) for p in range(m)])
        better = f < pbest_f
        pbest[better], pbest_f[better] = x[better], f[better]
        g = int(np.argmin(pbest_f))
        if pbest_f[g] < gbest_f:
            gbest, gbest_f = pbest[g].copy(), float(pbest_f[g])
        history.append(gbest_f)
        if stop.update(gbest_f):
            cause = "tolerance"
            break
    return TrainingRun(history, ev.count, gbest.tolist(), cause, wall_time_s=time.perf_counter() - t0,
                       seed=config.seed, config={"optimizer": "pso", **asdict(config)})


def fd_gradient(objective: Objective, x, step, seed: int, bounds=None, periodic=None) -> tuple[np.ndarray, int]:
    """Central-difference gradient with one common seed for all probes.

    Probes are clipped into ``bounds`` and the actual spacing is used;
    probes on ``periodic`` coordinates wrap instead, keeping the full
    spacing. Returns ``(gradient, evaluations)``.
    """
    x = np.asarray(x, float)
    step = np.broadcast_to(np.asarray(step, float), x.shape)
    periodic = _periodic_mask(periodic, len(x))
    b = None if bounds is None else np.asarray(bounds, float)
    grad = np.empty_like(x)
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += step[i]
        xm[i] -= step[i]
        spacing = 2 * step[i]
        if b is not None:
            if periodic[i]:
                xp[i] = _confine(xp[i], b[i, 0], b[i, 1], True)
                xm[i] = _confine(xm[i], b[i, 0], b[i, 1], True)
            else:
                xp[i] = min(xp[i], b[i, 1])
                xm[i] = max(xm[i], b[i, 0])
                spacing = xp[i] - xm[i]
        grad[i] = (objective(xp, seed) - objective(xm, seed)) / spacing
    return grad, 2 * len(x)


def adam_minimize(objective: Objective, start, bounds, config: AdamConfig = AdamConfig(),
                  periodic=None) -> TrainingRun:
    """Adam on finite-difference gradients.

    Each step draws one seed, measures the loss at the current point and the
    2*dim gradient probes with it, then updates and clips to ``bounds``
    (wrapping ``periodic`` coordinates).
    """
    t0 = time.perf_counter()
    bounds = np.asarray(bounds, float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    x = np.clip(np.asarray(start, float), lo, hi)
    if not np.allclose(x, start):
        raise ValueError("start point outside bounds")
    periodic = _periodic_mask(periodic, len(x))
    step = 0.01 * (hi - lo) if config.fd_step is None else config.fd_step
    ev = _Evaluator(objective, bounds)
    counted = _Counted(objective, ev)
    m1 = np.zeros_like(x)
    m2 = np.zeros_like(x)
    best_x, best_f = x.copy(), np.inf
    history = []
    stop = None
    cause = "max_iter"
    for it in range(config.max_iter + 1):
        seed = derive_seed(_ADAM, config.seed, it)
        fx = float(ev(x[None, :], [seed])[0])
        if fx < best_f:
            best_x, best_f = x.copy(), fx
        history.append(best_f)
        if stop is None:
            stop = _StopRule(config.tolerance, config.patience, best_f)
        elif stop.update(best_f):
            cause = "tolerance"
            break
        if it == config.max_iter:
            break
        grad, _ = fd_gradient(counted, x, step, seed, bounds, periodic)
        t = it + 1
        m1 = config.beta1 * m1 + (1 - config.beta1) * grad
        m2 = config.beta2 * m2 + (1 - config.beta2) * grad**2
        mhat = m1 / (1 - config.beta1**t)
        vhat = m2 / (1 - config.beta2**t)
        x = _confine(x - config.lr * mhat / (np.sqrt(vhat) + config.eps), lo, hi, periodic)
    return TrainingRun(history, ev.count, best_x.tolist(), cause, wall_time_s=time.perf_counter() - t0,
                       seed=config.seed, config={"optimizer": "adam", **{k: v for k, v in asdict(config).items()
                                                                          if k != "fd_step"}})


class _Counted:
    """Routes single probes through an evaluator so they are counted and bound-checked."""

    def __init__(self, objective, ev: _Evaluator):
        self.objective, self.ev = objective, ev

    def __call__(self, x, seed):
        return float(self.ev(np.asarray(x)[None, :], [seed])[0])


def final_loss(objective: Objective, x, seed: int, repeats: int = 20) -> tuple[float, float]:
    vals = np.array([objective(np.asarray(x), derive_seed(_FINAL, seed, r)) for r in range(repeats)])
    return float(vals.mean()), float(vals.std())


def run_strategy(which: str, scenario: Scenario | Link, seed: int, btb_params=None, workers: int = 1,
                 objective: Objective | None = None, space: ParameterSpace | None = None) -> TrainingRun:
    """Execute one training strategy end to end.

    ST1: Adam from the best of 20 random points. ST2: Adam from a stored
    back-to-back optimum (``btb_params``). ST3: PSO from a random swarm.
    """
    link = scenario if isinstance(scenario, Link) else Link(scenario)
    sc = link.scenario
    space = space or ParameterSpace(link.layout.n_channels, sc.weight_mode)
    objective = objective or make_objective(link, space)
    extra = 0
    if which == "ST3":
        cfg = PsoConfig(sc.swarm_size, sc.inertia, sc.c1, sc.c2, sc.max_iter, sc.tolerance, sc.pso_patience, seed)
        run = pso_minimize(objective, space.bounds, cfg, workers, periodic=space.periodic)
    elif which in ("ST1", "ST2"):
        if which == "ST1":
            rng = np.random.default_rng(derive_seed(_STARTS, seed))
            starts = space.random(rng, 20)
            vals = [objective(s, derive_seed(_STARTS, seed, i)) for i, s in enumerate(starts)]
            start = starts[int(np.argmin(vals))]
            extra = len(starts)
        else:
            if btb_params is None:
                raise ValueError("ST2 needs the stored back-to-back optimum")
            start = np.asarray(btb_params, float)
            if start.shape != (space.dim,):
                raise ValueError("BTB parameter vector has the wrong dimension")
        cfg = AdamConfig(lr=sc.adam_lr, max_iter=sc.adam_max_iter, tolerance=sc.tolerance,
                         patience=sc.adam_patience, seed=seed)
        run = adam_minimize(objective, start, space.bounds, cfg, periodic=space.periodic)
        run.evaluation_count += extra
    else:
        raise ValueError(f"unknown strategy {which!r}")
    run.final_loss_mean, run.final_loss_std = final_loss(objective, run.final_params, seed, sc.final_repeats)
    run.config["strategy"] = which
    return run
