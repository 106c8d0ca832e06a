"""Scenario sweeps comparing solvers along one system parameter.

An experiment config is a ``key = value`` file (the scenario format) with
these extra keys:

``axis``
    swept parameter: ``M``, ``P_total``, ``N_max``, ``R_min``, ``eps2`` or
    ``p_delta`` (or the matching :class:`ScenarioConfig` field name).
``values``
    comma-separated axis values.
``solvers``
    any of ``exhaustive``, ``greedy+grid``, ``random+grid``, ``oma``, ``drl-jrm``.
``instances``
    scenario seeds per axis value (``seed``, ``seed + 1``, ...).
``metrics``
    any of ``objective``, ``average_throughput``, ``q_eff``, ``qos_rate``,
    ``feasible``; default ``objective, average_throughput``.
``levels``, ``budget``
    power-grid resolution and enumeration budget of the grid solvers.
``train_<field>``
    overrides of the desk :class:`TrainConfig` preset for ``drl-jrm``.

Every solution is re-checked with :func:`noma.evaluate`; an infeasible
solution contributes objective 0 and ``feasible`` 0.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import DEFAULT_BUDGET, exhaustive_solve, greedy_sa, heuristic_solve, oma_solve, random_sa
from .noma import RateReport, evaluate
from .scenario import ConfigError, ScenarioConfig, generate, parse_config_text, scenario_config_from_dict

__all__ = [
    "AXES",
    "SOLVERS",
    "METRICS",
    "ExperimentConfig",
    "parse_experiment",
    "load_experiment",
    "solve",
    "run_sweep",
    "write_csvs",
]

log = logging.getLogger(__name__)

# axis alias -> ScenarioConfig field
AXES = {
    "M": "num_users",
    "P_total": "total_power_dbm",
    "N_max": "max_per_subcarrier",
    "R_min": "qos_mean",
    "eps2": "sic_error_sq",
    "p_delta": "pdsc_threshold_dbm",
}
SOLVERS = ("exhaustive", "greedy+grid", "random+grid", "oma", "drl-jrm")
METRICS = ("objective", "average_throughput", "q_eff", "qos_rate", "feasible")
CSV_HEADER = ("axis_value", "solver", "mean", "std", "episodes")


@dataclass(frozen=True)
class ExperimentConfig:
    base: ScenarioConfig
    axis: str                 # ScenarioConfig field name
    values: tuple
    solvers: tuple
    instances: int = 3
    metrics: tuple = ("objective", "average_throughput")
    levels: int = 4
    budget: int = DEFAULT_BUDGET
    train: tuple = ()         # (train_<field>, value) overrides of the desk training preset
    seed: int = 0

    def scenario_config(self, value, instance: int) -> ScenarioConfig:
        cast = int if self.axis in ("num_users", "max_per_subcarrier") else float
        cfg = self.base.replace(**{self.axis: cast(value)},
                                rng_seed=self.base.rng_seed + self.seed + instance)
        cfg.validate()
        return cfg


def _as_tuple(v) -> tuple:
    return tuple(v) if isinstance(v, list) else (v,)


def parse_experiment(values: dict, seed: int | None = None) -> ExperimentConfig:
    base = scenario_config_from_dict(values)
    if "axis" not in values:
        raise ConfigError("missing 'axis'")
    axis = str(values["axis"])
    axis = AXES.get(axis, axis)
    if axis not in AXES.values():
        raise ConfigError(f"unknown axis {values['axis']!r}; choose from {sorted(AXES)}")
    if "values" not in values:
        raise ConfigError("missing 'values'")
    solvers = _as_tuple(values.get("solvers", ["exhaustive"]))
    for s in solvers:
        if s not in SOLVERS:
            raise ConfigError(f"unknown solver {s!r}; choose from {SOLVERS}")
    metrics = _as_tuple(values.get("metrics", ["objective", "average_throughput"]))
    for m in metrics:
        if m not in METRICS:
            raise ConfigError(f"unknown metric {m!r}; choose from {METRICS}")
    from .trainer import train_config_from_dict  # deferred: keeps grid-only sweeps light

    train_config_from_dict(values)  # validate early
    train = tuple(sorted((k, v) for k, v in values.items() if k.startswith("train_")))
    instances = int(values.get("instances", 3))
    if instances < 1:
        raise ConfigError("instances must be >= 1")
    cfg = ExperimentConfig(base=base, axis=axis, values=_as_tuple(values["values"]),
                           solvers=solvers, instances=instances, metrics=metrics,
                           levels=int(values.get("levels", 4)),
                           budget=int(values.get("budget", DEFAULT_BUDGET)), train=train,
                           seed=int(seed if seed is not None else values.get("seed", 0)))
    for v in cfg.values:  # fail early on out-of-range axis values
        cfg.scenario_config(v, 0)
    return cfg


def load_experiment(path, seed: int | None = None) -> ExperimentConfig:
    return parse_experiment(parse_config_text(Path(path).read_text()), seed)


def _train_config(overrides: tuple, seed: int):
    from .trainer import TrainConfig, train_config_from_dict

    return train_config_from_dict(dict(overrides), TrainConfig.desk(seed=seed))


def solve(solver: str, scenario, levels: int = 4, budget: int = DEFAULT_BUDGET, seed: int = 0,
          train_overrides: tuple = ()):
    """Run one solver; returns ``(assignment, powers)`` or ``None`` if it found nothing."""
    if solver == "exhaustive":
        sol = exhaustive_solve(scenario, levels, budget)
        return None if sol is None else (sol.assignment, sol.power.powers)
    if solver == "greedy+grid":
        sol = heuristic_solve(scenario, greedy_sa(scenario), levels, budget)
    elif solver == "random+grid":
        sol = heuristic_solve(scenario, random_sa(scenario, seed), levels, budget)
    elif solver == "oma":
        sol = oma_solve(scenario, levels, budget)
    elif solver == "drl-jrm":
        from .trainer import policy_solution, train

        cfg = _train_config(train_overrides, seed)
        agents, _ = train(scenario, cfg)
        occ, power, _ = policy_solution(scenario, agents, cfg)
        return occ, power.powers
    else:
        raise ValueError(f"unknown solver {solver!r}")
    return sol.assignment, sol.power.powers


def _metrics(report: RateReport | None) -> dict:
    if report is None:
        return {"objective": 0.0, "average_throughput": 0.0, "q_eff": 0.0, "qos_rate": 0.0,
                "feasible": 0.0}
    return {
        "objective": report.objective_normalized if report.feasible else 0.0,
        "average_throughput": report.average_throughput,
        "q_eff": report.q_eff,
        "qos_rate": report.qos_rate,
        "feasible": float(report.feasible),
    }


def _run_point(args) -> dict:
    exp, value, instance, solver = args
    sc = generate(exp.scenario_config(value, instance))
    seed = exp.seed * 1_000_003 + instance
    result = solve(solver, sc, exp.levels, exp.budget, seed, exp.train)
    # re-validate: metrics always come from a fresh evaluation
    report = None if result is None else evaluate(sc, *result)
    return _metrics(report)


def run_sweep(exp: ExperimentConfig, threads: int = 1) -> dict:
    """Aggregate metrics: ``{metric: [(axis value, solver, mean, std, n), ...]}``.

    Rows are ordered by solver, then axis value, whatever the worker count.
    """
    points = [(exp, v, k, s) for s in exp.solvers for v in exp.values for k in range(exp.instances)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_point, points))
    else:
        results = [_run_point(p) for p in points]
    out = {m: [] for m in exp.metrics}
    n = exp.instances
    for j in range(0, len(points), n):
        _, value, _, solver = points[j]
        chunk = results[j:j + n]
        log.info("%s=%s %s done", exp.axis, value, solver)
        for m in exp.metrics:
            vals = np.array([r[m] for r in chunk], dtype=float)
            out[m].append((value, solver, float(vals.mean()), float(vals.std()), n))
    return out


def write_csvs(results: dict, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric, rows in results.items():
        path = out / f"{metric}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for value, solver, mean, std, n in rows:
                w.writerow([repr(value) if isinstance(value, float) else value, solver,
                            repr(mean), repr(std), n])
        paths.append(path)
    return paths
