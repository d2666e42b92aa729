"""Command line front end: run experiments, sweep seeds, or benchmark
the working-slot alignment on its own."""

from __future__ import annotations

import argparse
import json
import sys

from .baselines import STRATEGIES
from .core import ChargingSpec
from .experiments import SHAPES, ExperimentConfig, SparseAreaError, run_experiment
from .radio import derive_rng_stream
from .sync import expected_scan_latency, find_best_p, sample_latencies

DEFAULTS = {
    "shape": "square",
    "nodes": 50,
    "t": 50,
    "strategy": "rics",
    "rounds": 2,
    "seed": 0,
    "out": "runs",
    "slot_ms": 1.0,
    "repeat": 1,
    "trace": False,
    "sync_bench": False,
}

SYNC_BENCH_TRIALS = 10_000
SYNC_BENCH_BASELINE_TRIALS = 500


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icroute",
        description="Slot-stepped routing runs for intermittently powered "
                    "sensor fields.")
    parser.add_argument("--config", metavar="PATH",
                        help="JSON file with the same keys as the flags; "
                             "explicit flags win")
    parser.add_argument("--shape", choices=sorted(SHAPES))
    parser.add_argument("--nodes", type=int, metavar="N")
    parser.add_argument("--t", type=int, metavar="SLOTS",
                        help="charge slots per working slot")
    parser.add_argument("--strategy", choices=STRATEGIES)
    parser.add_argument("--rounds", type=int, metavar="R",
                        help="messages per node")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", metavar="DIR")
    parser.add_argument("--slot-ms", type=float, dest="slot_ms",
                        help="reporting scale, milliseconds per slot")
    parser.add_argument("--trace", action="store_true", default=None,
                        help="also write trace.ndjson per run")
    parser.add_argument("--repeat", type=int, metavar="K",
                        help="run K seeds starting at --seed")
    parser.add_argument("--sync-bench", action="store_true", default=None,
                        dest="sync_bench",
                        help="benchmark alignment latency only, no network run")
    return parser


def load_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        settings.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    if settings["repeat"] < 1:
        raise ValueError("--repeat must be >= 1")
    return settings


def sync_bench(t: int, seed: int) -> str:
    spec = ChargingSpec(charge_slots=t)
    rng = derive_rng_stream(seed, 0, "sync-bench")
    measured = sample_latencies(spec, SYNC_BENCH_TRIALS, rng)
    mean = sum(measured) / len(measured)
    line = (f"t={t}: scan mean {mean:.1f} slots over {SYNC_BENCH_TRIALS} pairs "
            f"(analytic {expected_scan_latency(spec):.1f})")
    try:
        p, base_mean, base_var = find_best_p(
            spec, SYNC_BENCH_BASELINE_TRIALS,
            derive_rng_stream(seed, 1, "sync-bench"))
        line += (f"; best random-delay baseline p={p:.1f} "
                 f"mean {base_mean:.1f} var {base_var:.1f}")
    except RuntimeError:
        line += "; random-delay baseline never aligned"
    return line


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = load_settings(args)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"icroute: {exc}", file=sys.stderr)
        return 2

    if settings["sync_bench"]:
        print(sync_bench(settings["t"], settings["seed"]))
        return 0

    for i in range(settings["repeat"]):
        try:
            config = ExperimentConfig(
                shape=settings["shape"],
                n_nodes=settings["nodes"],
                t=settings["t"],
                strategy=settings["strategy"],
                rounds=settings["rounds"],
                seed=settings["seed"] + i,
                slot_ms=settings["slot_ms"],
            )
            result = run_experiment(config, trace=settings["trace"])
        except (SparseAreaError, ValueError) as exc:
            print(f"icroute: {exc}", file=sys.stderr)
            return 1
        result.export(settings["out"])
        summary = result.summary()
        p50 = summary["delivery_quantiles_slots"]["p50"]
        print(f"{config.label()}: topo {summary['topo_time_slots']} slots, "
              f"delivered {summary['delivered']}/{summary['created']}, "
              f"p50 {p50} slots"
              + ("" if summary["forward_converged"] else " [hit horizon]"))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
