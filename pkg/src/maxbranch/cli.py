"""Command-line entry point.

Subcommands: simulate, classify, estimate-stationary, queue-sim, verify.
Exit codes: 0 ok, 2 config error, 3 runtime numeric error, 4 exact
invariant failure (verify only).  All randomness is controlled by one
seed; numbers are printed with 9 significant digits so reproduction runs
diff cleanly.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from typing import Optional

from . import gated_queue
from .analysis import classify
from .config import ConfigError, RunConfig, load_config
from .couplings import NotErgodicError, estimate_stationary
from .laws import NumericsError
from .process import SimulationError, simulate_batch
from .verify import run_verification

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_INVARIANT = 4


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".9g")
    return str(x)


def _json_default(obj):
    if isinstance(obj, float):
        return _fmt(obj)
    raise TypeError(f"not serializable: {obj!r}")


def _round9(obj):
    if isinstance(obj, float):
        if math.isfinite(obj):
            return float(format(obj, ".9g"))
        return _fmt(obj)
    if isinstance(obj, dict):
        return {k: _round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round9(v) for v in obj]
    return obj


def _emit(payload: dict, out_path: Optional[str]) -> None:
    text = json.dumps(_round9(payload), indent=2, sort_keys=True)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def _require_spec(cfg: RunConfig):
    if cfg.spec is None:
        raise ConfigError("this command requires a [process] section")
    return cfg.spec


def cmd_simulate(cfg: RunConfig, args) -> int:
    spec = _require_spec(cfg)
    seed = args.seed if args.seed is not None else cfg.seed
    fmt = args.format or cfg.out_format
    out_path = args.out or cfg.out_path
    trajectories = simulate_batch(spec, cfg.n_steps, cfg.n_paths, seed,
                                  n_jobs=args.threads)
    if out_path:
        if fmt == "csv":
            with open(out_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["path_id", "step", "state"])
                for pid, traj in enumerate(trajectories):
                    for step, state in enumerate(traj.states):
                        writer.writerow([pid, step, _fmt(float(state))])
        else:
            with open(out_path, "w") as fh:
                for pid, traj in enumerate(trajectories):
                    fh.write(json.dumps({
                        "path_id": pid,
                        "seed": traj.seed,
                        "absorbed_at": traj.absorbed_at,
                        "numeric_absorption": traj.numeric_absorption,
                        "states": [_fmt(float(s)) for s in traj.states],
                    }) + "\n")
    absorbed = sum(1 for t in trajectories if t.absorbed_at is not None)
    print(f"seed {seed}: {cfg.n_paths} paths x {cfg.n_steps} steps, "
          f"{absorbed} absorbed ({_fmt(absorbed / max(cfg.n_paths, 1))} fraction)")
    return EXIT_OK


def cmd_classify(cfg: RunConfig, args) -> int:
    spec = _require_spec(cfg)
    if isinstance(spec.offspring, (list, tuple)):
        raise ConfigError("classify requires a single offspring law")
    result = classify(spec.offspring, spec.environment)
    _emit(result.to_json_dict(), args.out or cfg.out_path)
    return EXIT_OK


def cmd_estimate_stationary(cfg: RunConfig, args) -> int:
    spec = _require_spec(cfg)
    seed = args.seed if args.seed is not None else cfg.seed
    section = cfg.stationary
    est = estimate_stationary(
        spec,
        burn_in=section.get("burn_in", cfg.burn_in),
        n_samples=section.get("n_samples", 10_000),
        seed=seed,
        moments=[float(s) for s in section.get("moments", [])],
        override=section.get("override", False),
    )
    payload = {
        "n_samples": est.n_samples,
        "burn_in": est.burn_in,
        "moments": {_fmt(s): {"estimate": m, "std_err": se}
                    for s, (m, se) in est.moments.items()},
        "stabilization_warning": est.stabilization_warning,
        "split_ks_statistic": est.split_ks_statistic,
        "mean": float(est.samples.mean()),
        "median": float(sorted(est.samples)[len(est.samples) // 2]),
    }
    _emit(payload, args.out or cfg.out_path)
    return EXIT_OK


def cmd_queue_sim(cfg: RunConfig, args) -> int:
    if not cfg.queue:
        raise ConfigError("queue-sim requires a [queue] section")
    seed = args.seed if args.seed is not None else cfg.seed
    qcfg = gated_queue.GatedQueueConfig(cfg.queue["arrival_rate"],
                                        cfg.queue["service"], cfg.queue["mode"])
    n_stages = cfg.queue["n_stages"]
    out_path = args.out or cfg.out_path
    if out_path:
        stages = gated_queue.simulate_gated_queue(qcfg, n_stages, seed)
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage_index", "gate_open_time", "batch_size",
                             "stage_duration", "idle_wait"])
            for row in gated_queue.stage_records_to_rows(stages):
                writer.writerow([row[0], _fmt(float(row[1])), row[2],
                                 _fmt(float(row[3])), _fmt(float(row[4]))])
    summary = gated_queue.queue_performance_report(qcfg, n_stages, seed)
    _emit(summary.to_json_dict(), None)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    kwargs = dict(cfg.verify) if cfg else {}
    checks = run_verification(seed=seed, **kwargs)
    exact_failed = [c for c in checks if c["kind"] == "exact" and not c["passed"]]
    stat_failed = [c for c in checks if c["kind"] == "statistical" and not c["passed"]]
    _emit({"checks": checks,
           "exact_failures": [c["name"] for c in exact_failed],
           "statistical_warnings": [c["name"] for c in stat_failed]},
          args.out or (cfg.out_path if cfg else None))
    return EXIT_INVARIANT if exact_failed else EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "run seeded trajectories and write them out"),
    "classify": (cmd_classify, "classify the configured process regime"),
    "estimate-stationary": (cmd_estimate_stationary,
                            "estimate the stationary law of an ergodic process"),
    "queue-sim": (cmd_queue_sim, "simulate the gated infinite-server queue"),
    "verify": (cmd_verify, "run the exact-invariant and statistical gate suite"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--seed", type=int, metavar="U64",
                        help="override the configured seed")
    common.add_argument("--threads", type=int, default=1, metavar="N",
                        help="parallelism degree (results are independent of it)")
    common.add_argument("--out", metavar="PATH", help="output file path")
    common.add_argument("--format", choices=["csv", "jsonl"],
                        help="trajectory output format")

    parser = argparse.ArgumentParser(
        prog="maxbranch",
        description="Simulation and analysis of maximal branching processes "
                    "in random environment.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.command == "verify":
            cfg = RunConfig(spec=None)
        else:
            raise ConfigError("--config is required for this command")
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotErgodicError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NumericsError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
