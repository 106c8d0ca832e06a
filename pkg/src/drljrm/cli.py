"""Command-line entry point.

    drljrm run <config> --out <dir> [--seed N] [--threads K]
    drljrm verify <suite> [--csv PATH]
    drljrm train <config> --checkpoint <path> [--log PATH]
    drljrm eval --checkpoint <path> --scenario <file> [--episodes N]

Log verbosity comes from ``DRLJRM_LOG_LEVEL`` (default ``WARNING``); logs go
to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .scenario import (ConfigError, dump_scenario, generate, load_scenario, parse_config_text,
                       scenario_config_from_dict)

LOG_ENV = "DRLJRM_LOG_LEVEL"

# exit codes
OK, FAILED, CONFIG, BUDGET, DIVERGED = 0, 1, 2, 3, 4


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _cmd_run(args) -> int:
    from .experiments import load_experiment, run_sweep, write_csvs

    exp = load_experiment(args.config, seed=args.seed)
    results = run_sweep(exp, threads=args.threads)
    for path in write_csvs(results, args.out):
        print(path)
    return OK


def _cmd_verify(args) -> int:
    from .verify import format_table, run_suite, write_csv

    checks = run_suite(args.suite)
    print(format_table(checks))
    if args.csv:
        write_csv(checks, args.csv)
    failed = [c for c in checks if not c.passed]
    print(f"{args.suite}: {len(checks) - len(failed)}/{len(checks)} checks passed")
    return FAILED if failed else OK


def _cmd_train(args) -> int:
    from .trainer import train, train_config_from_dict

    values = parse_config_text(Path(args.config).read_text())
    sc = generate(scenario_config_from_dict(values))
    cfg = train_config_from_dict(values)
    agents, log = train(sc, cfg)
    agents.save(args.checkpoint, metadata={"train_config": cfg.to_dict(),
                                           "scenario": dump_scenario(sc)})
    if args.log:
        log.to_csv(args.log)
    rows = [r for r in log.rows if r["branch"] == "joint"]
    print(f"trained {cfg.epochs} epochs, {len(rows)} joint; checkpoint {args.checkpoint}")
    return OK


def _cmd_eval(args) -> int:
    from .nn import checkpoint_extras
    from .trainer import TrainConfig, build_agents, evaluate_policy

    meta, _ = checkpoint_extras(args.checkpoint)
    if "train_config" not in meta:
        raise ConfigError(f"{args.checkpoint} carries no training configuration")
    cfg = TrainConfig.from_dict(meta["train_config"])
    source = args.scenario
    if source.endswith(".csv"):
        sc = load_scenario(Path(source))
    else:
        sc = generate(scenario_config_from_dict(parse_config_text(Path(source).read_text())))
    agents = build_agents(sc.num_users, sc.num_subcarriers, cfg)
    agents.load(args.checkpoint)
    rep = evaluate_policy(sc, agents, args.episodes, cfg)
    out = {
        "objective": rep.objective,
        "average_throughput": rep.average_throughput,
        "q_eff": rep.q_eff,
        "qos_rate": rep.qos_rate,
        "feasible_fraction": rep.feasible_fraction,
        "episodes": rep.episodes,
        "assignment": rep.assignment.tolist(),
    }
    print(json.dumps(out, indent=2))
    return OK


def build_parser() -> argparse.ArgumentParser:
    from .verify import SUITES

    p = argparse.ArgumentParser(prog="drljrm", description="DRL joint resource management for MC-NOMA")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario sweep and write one CSV per metric")
    r.add_argument("config")
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--threads", type=int, default=1)
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("verify", help="run an acceptance suite")
    v.add_argument("suite", choices=sorted(SUITES))
    v.add_argument("--csv", default=None, help="also write the deterministic check rows here")
    v.set_defaults(func=_cmd_verify)

    t = sub.add_parser("train", help="train on the scenario of a config file")
    t.add_argument("config")
    t.add_argument("--checkpoint", required=True)
    t.add_argument("--log", default=None, help="write the per-epoch training log CSV here")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a scenario")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scenario", required=True,
                   help="scenario dump (.csv) or a key = value scenario config")
    e.add_argument("--episodes", type=int, default=1)
    e.set_defaults(func=_cmd_eval)
    return p


def main(argv=None) -> int:
    from .baselines import SearchBudgetExceeded
    from .nn import CheckpointMismatch
    from .trainer import TrainingDiverged

    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG
    except SearchBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return BUDGET
    except TrainingDiverged as exc:
        where = f"; last good parameters saved to {exc.checkpoint}" if exc.checkpoint else ""
        print(f"error: {exc}{where}", file=sys.stderr)
        return DIVERGED
