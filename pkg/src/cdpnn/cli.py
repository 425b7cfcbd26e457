"""Command-line entry point: ``cdpnn <verb> [--scenario FILE] [--seed N] [--out DIR] ...``.

Exit codes: 0 success, 1 invalid scenario, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import experiments as ex
from . import pnn
from .metrics import export_grid
from .scenario import Scenario, ScenarioError, load_scenario

THREADS_ENV = "CDPNN_THREADS"
EXIT_OK, EXIT_SCENARIO, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("cdpnn")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", type=Path, help="YAML scenario file (defaults built in)")
    common.add_argument("--seed", type=int, help="root seed (overrides the scenario's)")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--repeats", type=int, help="acquisitions per point")
    common.add_argument("--threads", type=int, default=_default_threads(),
                        help=f"parallel objective evaluations (env {THREADS_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cdpnn", description="PNN chromatic-dispersion equalizer simulator")
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("train", parents=[common], help="train the PNN and store its weights")
    for verb, text in (("ber-scan", "BER versus received power"), ("penalty", "small-signal power penalty"),
                       ("freq-sweep", "loss versus carrier offset"),
                       ("ideal-compare", "trained versus ideal-phase PNNs")):
        sp = sub.add_parser(verb, parents=[common], help=text)
        sp.add_argument("--weights", type=Path, help="weights JSON from `train` (trained on the fly if omitted)")
        if verb == "ber-scan":
            sp.add_argument("--unequalized", action="store_true", help="scan without the PNN")
    hm = sub.add_parser("heatmap", parents=[common], help="(N, dt) scalability scan")
    hm.add_argument("--n-grid", type=int, nargs="+", default=[2, 4, 8, 16])
    hm.add_argument("--dt-grid-ps", type=float, nargs="+", default=[2.5, 5.0, 10.0, 20.0])
    hm.add_argument("--swarm", type=int, default=ex.HEATMAP_BUDGET["swarm_size"])
    hm.add_argument("--iterations", type=int, default=ex.HEATMAP_BUDGET["max_iter"])
    sub.add_parser("selftest", parents=[common], help="fast core checks with deterministic outputs")
    return p


def _scenario(args) -> Scenario:
    sc = load_scenario(args.scenario) if args.scenario else Scenario()
    if args.seed is not None:
        sc = sc.replace(seed=args.seed)
    return sc


def _weights(args, sc: Scenario, out: Path) -> pnn.PnnWeights:
    if getattr(args, "weights", None):
        w, layout, _ = pnn.load_weights(args.weights)
        if layout.digest() != sc.layout().digest():
            raise ValueError("weights were trained for a different PNN layout")
        return w
    return _train(sc, args, out).weights


def _train(sc: Scenario, args, out: Path) -> ex.TrainOutcome:
    res = ex.train(sc, workers=args.threads)
    res.table.write(out)
    pnn.save_weights(out / "weights.json", res.weights, res.layout,
                     {"scenario_hash": sc.digest(), "seed": sc.seed, "strategy": sc.strategy})
    res.run.to_json(out / "training_run.json", include_wall_time=False)
    log.info("training wall time %.1f s", res.run.wall_time_s)
    return res


def _run(args) -> int:
    sc = _scenario(args)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    verb = args.verb
    if verb == "train":
        _train(sc, args, out)
    elif verb == "ber-scan":
        w = None if args.unequalized else _weights(args, sc, out)
        ex.ber_vs_prx(sc, w, repeats=args.repeats or 50).write(out)
    elif verb == "penalty":
        w = _weights(args, sc, out)
        ex.penalty_sweep(sc, w).write(out)
    elif verb == "freq-sweep":
        w = _weights(args, sc, out)
        ex.frequency_sweep(sc, w, repeats=args.repeats or 20).write(out)
    elif verb == "ideal-compare":
        w = _weights(args, sc, out)
        cmp = ex.ideal_vs_trained(sc, w, repeats=args.repeats or 50)
        cmp.table.write(out)
        for name, eye in cmp.eyes.items():
            export_grid(out / f"eye_{name}.csv", eye, header=f"eye matrix {name}: one row per symbol")
    elif verb == "heatmap":
        scns = [sc] if args.scenario else ex.heatmap_scenarios(sc)
        ex.heatmap_scan(scns, args.n_grid, args.dt_grid_ps, seed=sc.seed, swarm_size=args.swarm,
                        max_iter=args.iterations, repeats=args.repeats or 5, workers=args.threads).write(out)
    elif verb == "selftest":
        from .selftest import run_selftest

        results = run_selftest(out, sc.seed)
        for crit, ok in results.items():
            print(f"criterion {crit}: {'PASS' if ok else 'FAIL'}")
        (out / "selftest_summary.json").write_text(json.dumps({str(k): v for k, v in results.items()},
                                                              indent=2, sort_keys=True) + "\n")
        if not all(results.values()):
            return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        return _run(args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except (ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
