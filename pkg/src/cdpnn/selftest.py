"""Fast self-checks of the simulator core, runnable from the command line.

Each check returns ``(passed, ResultTable)``; the tables contain only
quantities that are deterministic given the root seed (timings go to the
log), so two invocations produce byte-identical files.
"""
from __future__ import annotations

import logging
import time

import numpy as np

from . import metrics, oracles
from . import optimize as opt
from .channel import FiberSpec, propagate
from .experiments import ResultTable, first_notch, penalty_sweep
from .pnn import required_taps
from .scenario import Scenario, derive_seed
from .waveform import ComplexEnvelope

log = logging.getLogger(__name__)


def check_inverse_channel(seed: int, n: int = 2**14) -> tuple[bool, ResultTable]:
    rng = np.random.default_rng(derive_seed(101, seed))
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    env = ComplexEnvelope(x, 160e9)
    fib = FiberSpec(125e3, -0.021, 0.0)
    t0 = time.perf_counter()
    y = propagate(propagate(env, fib), fib.reversed_dispersion()).samples
    dt = time.perf_counter() - t0
    err = float(np.sqrt(np.mean(np.abs(y - x) ** 2) / np.mean(np.abs(x) ** 2)))
    log.info("inverse channel: rel. RMS %.3g in %.3f s", err, dt)
    ok = err < 1e-9 and dt < 1.0
    return ok, ResultTable("c1_inverse_channel", {"n_samples": [n], "rel_rms": [err], "pass": [ok]})


def check_penalty_notch(seed: int) -> tuple[bool, ResultTable]:
    t0 = time.perf_counter()
    tab = penalty_sweep(Scenario(length_km=125.0))
    dt = time.perf_counter() - t0
    notch = first_notch(tab["f_ghz"], tab["fiber_db"])
    mask = tab["analytic_db"] < 20
    dev = float(np.max(np.abs(tab["fiber_db"][mask] - tab["analytic_db"][mask])))
    ok = abs(notch - 5.51) <= 0.1 and dev <= 0.5 and dt < 30
    log.info("penalty notch %.2f GHz, max deviation %.2g dB, %.2f s", notch, dev, dt)
    tab.name = "c2_penalty"
    tab.metadata.update({"notch_ghz": notch, "max_dev_db_below_20": dev, "pass": ok})
    return ok, tab


def check_required_taps(seed: int) -> tuple[bool, ResultTable]:
    n = required_taps(10e9, FiberSpec(100e3), 50e-12, 2 * np.pi * 10e9)
    ok = n == 4
    return ok, ResultTable("c3_required_taps", {"n_taps": [n], "pass": [ok]})


def check_optimizers(seed: int) -> tuple[bool, ResultTable]:
    rng = np.random.default_rng(derive_seed(107, seed))
    m = rng.standard_normal((7, 7))
    a = m @ m.T + 7 * np.eye(7)
    b = rng.standard_normal(7)
    x0 = rng.standard_normal(7)

    def quad(x, _seed):
        return 0.5 * x @ a @ x + b @ x

    g, _ = opt.fd_gradient(quad, x0, 1e-3, 0)
    g_ref = oracles.quadratic_gradient(a, b, x0)
    grad_err = float(np.linalg.norm(g - g_ref) / np.linalg.norm(g_ref))

    def noisy_sphere(x, s):
        return float(np.sum((x - 0.3) ** 2) + 1e-3 * np.random.default_rng(s).standard_normal())

    bounds = np.array([[-1.0, 1.0]] * 5)
    cfg = opt.PsoConfig(swarm_size=12, max_iter=40, tolerance=1e-6, patience=40, seed=seed)
    r1 = opt.pso_minimize(noisy_sphere, bounds, cfg)
    r2 = opt.pso_minimize(noisy_sphere, bounds, cfg)
    hist = np.asarray(r1.best_loss_history)
    monotone = bool(np.all(np.diff(hist) <= 0))
    deterministic = r1.best_loss_history == r2.best_loss_history and r1.final_params == r2.final_params

    flat = opt.pso_minimize(lambda x, s: 1.0, bounds, opt.PsoConfig(swarm_size=6, seed=seed))
    stop_ok = flat.stopping_cause == "tolerance" and len(flat.best_loss_history) == 16

    ok = grad_err < 1e-6 and monotone and deterministic and stop_ok
    tab = ResultTable("c7_optimizers", {"fd_rel_error": [grad_err], "pso_monotone": [monotone],
                                        "pso_deterministic": [deterministic],
                                        "flat_history_len": [len(flat.best_loss_history)], "pass": [ok]},
                      {"pso_history": r1.best_loss_history})
    return ok, tab


def check_metrics_oracle(seed: int, n_sets: int = 1000) -> tuple[bool, ResultTable]:
    rng = np.random.default_rng(derive_seed(108, seed))
    worst_l1 = worst_thr = 0.0
    ber_mismatch = raised_ok = 0
    n_ber = 0
    for _ in range(n_sets):
        n_levels = int(rng.choice([2, 4, 8]))
        per = int(rng.integers(10, 60))
        labels = np.repeat(np.arange(n_levels), per)
        rng.shuffle(labels)
        sigma = float(rng.uniform(0.02, 1.5))
        y = labels + sigma * rng.standard_normal(len(labels))
        st = metrics.level_stats(y, labels, n_levels)
        worst_l1 = max(worst_l1, abs(metrics.loss_l1(st) - oracles.loss_l1_bruteforce(y, labels, n_levels)))
        thr = metrics.thresholds(st)
        worst_thr = max(worst_thr, float(np.max(np.abs(
            thr.values - np.asarray(oracles.thresholds_bruteforce(y, labels, n_levels))))))
        if thr.increasing:
            n_ber += 1
            res = metrics.ber(y, labels, st, n_levels=n_levels, bit_map="gray")
            ref = oracles.ber_bruteforce(y, labels, n_levels)
            ber_mismatch += (res.errors, res.n_bits) != ref
        else:
            try:
                metrics.ber(y, labels, st, n_levels=n_levels, bit_map="gray")
            except ValueError:
                raised_ok += 1
            else:
                ber_mismatch += 1
    ok = worst_l1 <= 1e-12 and worst_thr <= 1e-12 and ber_mismatch == 0
    tab = ResultTable("c8_metrics_oracle", {"sets": [n_sets], "ber_sets": [n_ber], "overlap_sets": [raised_ok],
                                            "max_l1_err": [worst_l1], "max_thr_err": [worst_thr],
                                            "ber_mismatches": [ber_mismatch], "pass": [ok]})
    return ok, tab


CHECKS = {
    1: check_inverse_channel,
    2: check_penalty_notch,
    3: check_required_taps,
    7: check_optimizers,
    8: check_metrics_oracle,
}


def run_selftest(out_dir, seed: int = 0) -> dict:
    """Run every check, write its table under ``out_dir``; returns {criterion: passed}."""
    results = {}
    for crit, fn in CHECKS.items():
        ok, tab = fn(seed)
        tab.metadata.setdefault("seed", seed)
        tab.write(out_dir)
        results[crit] = ok
    return results
