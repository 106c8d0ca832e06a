"""Acceptance suites: exact-math, gradient, oracle, training and complexity checks.

Every check yields :class:`Check` rows. Rows flagged ``timing`` hold wall
clock measurements; they are printed but never written to CSV, so the CSV
of a suite is a pure function of the seeds.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .baselines import exhaustive_solve, greedy_sa, heuristic_solve, oma_solve, random_sa
from .gradcheck import check_gradients
from .nn import FC, Conv, Flatten, MaxPool, NetworkSpec, ResBlock
from .noma import evaluate, normalize_power
from .pa_agents import (
    PaNetConfig,
    apply_pa_action,
    pa_actor_spec,
    pa_critic_spec,
    pa_internal_reward,
    pa_joint_reward,
    share_factors,
    state_cnn_spec,
)
from .sa_agent import SaNetConfig, sa_actor_spec, sa_critic_spec, sa_internal_reward, sa_joint_reward
from .scenario import ScenarioConfig, dbm_to_watts, generate

__all__ = ["Check", "SUITES", "run_suite", "format_table", "write_csv", "small_scenario"]

CSV_HEADER = ("criterion", "check", "passed", "value", "threshold")


@dataclass(frozen=True)
class Check:
    criterion: int
    name: str
    passed: bool
    value: float
    threshold: float
    timing: bool = False

    def __post_init__(self):
        # numpy scalars would leak into CSV output as e.g. "np.True_"
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "threshold", float(self.threshold))


def _timed(criterion: int, limit: float, start: float) -> Check:
    elapsed = time.perf_counter() - start
    return Check(criterion, "runtime_s", elapsed < limit, elapsed, limit, timing=True)


def small_scenario(num_users: int, num_subcarriers: int, max_per_subcarrier: int, seed: int,
                   **changes):
    cfg = ScenarioConfig(num_users=num_users, num_subcarriers=num_subcarriers,
                         max_per_subcarrier=max_per_subcarrier, rng_seed=seed, **changes)
    return generate(cfg)


# --- core math ---------------------------------------------------------------------------

def perfect_sic_rates(gains, occupancy, powers, noise_var: float, sub_bw: float) -> np.ndarray:
    """Rates with error-free cancellation, computed independently of :mod:`noma`.

    User ``m`` on subcarrier ``i`` is interfered with by every co-channel user
    that is stronger (higher gain; lower index on ties), at ``m``'s own gain.
    """
    g = np.asarray(gains, dtype=np.float64)
    on = np.asarray(occupancy) != 0
    p = np.where(on, powers, 0.0)
    n_f, m = g.shape
    out = np.zeros((n_f, m))
    idx = np.arange(m)
    for i in range(n_f):
        # stronger[a, b]: user b decodes before user a
        stronger = (g[i][None, :] > g[i][:, None]) | (
            (g[i][None, :] == g[i][:, None]) & (idx[None, :] < idx[:, None]))
        interference = (stronger & on[i][None, :]) @ p[i]
        sinr = p[i] * g[i] / (interference * g[i] + noise_var)
        out[i] = np.where(on[i], sub_bw * np.log2(1.0 + sinr), 0.0)
    return out


def check_core_math(instances: int = 100, seed: int = 0) -> list[Check]:
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(instances):
        m = int(rng.integers(2, 7))
        n_f = int(rng.integers(1, 5))
        sc = small_scenario(m, n_f, int(rng.integers(1, m + 1)), seed * 1000 + k)
        sc = sc.with_params(sic_error_sq=0.0, pdsc_threshold=0.0)
        occ = (rng.random((n_f, m)) < 0.6).astype(np.int64)
        powers = normalize_power(occ * rng.random((n_f, m)), sc.total_power)
        got = evaluate(sc, occ, powers).rates
        want = perfect_sic_rates(sc.gains, occ, powers, sc.noise_var, sc.subcarrier_bandwidth)
        denom = np.maximum(np.abs(want), np.finfo(float).tiny)
        worst = max(worst, float(np.max(np.abs(got - want) / denom)))
    return [Check(1, "perfect_sic_max_rel_error", worst <= 1e-12, worst, 1e-12),
            _timed(1, 1.0, start)]


def check_power_budget(trajectories: int = 10_000, steps: int = 5, seed: int = 0) -> list[Check]:
    """Random indicator trajectories of random shapes, all pushed through the
    real action and normalization code.

    Shapes are padded to a common (4, 6) canvas with unassigned slots, so one
    elementwise action call advances every trajectory at once; normalization
    stays per trajectory.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    total = dbm_to_watts(40.0)
    n_f = rng.integers(1, 5, size=trajectories)
    m = rng.integers(1, 7, size=trajectories)
    inside = ((np.arange(4)[None, :, None] < n_f[:, None, None])
              & (np.arange(6)[None, None, :] < m[:, None, None]))
    occ = ((rng.random((trajectories, 4, 6)) < 0.7) & inside).astype(np.int64)
    scale = rng.choice([1e-3, 1.0, 10.0], size=trajectories)[:, None, None]
    v = occ * rng.random((trajectories, 4, 6)) * scale
    step = rng.choice([1e-5, 1e-2, 0.5], size=trajectories)[:, None, None]
    worst_sum = 0.0
    min_p = math.inf
    for _ in range(steps):
        v = apply_pa_action(v, rng.integers(-1, 2, size=v.shape), step, occ)
        for k in range(trajectories):
            p = normalize_power(v[k, :n_f[k], :m[k]], total)
            min_p = min(min_p, float(p.min()))
            if v[k].sum() > 0:
                worst_sum = max(worst_sum, abs(p.sum() - total) / total)
    return [Check(2, "budget_max_rel_error", bool(worst_sum <= 1e-9), worst_sum, 1e-9),
            Check(2, "min_power", min_p >= 0.0, min_p, 0.0),
            _timed(2, 5.0, start)]


def check_rewards() -> list[Check]:
    """Reward functions against values worked out by hand on a fixed report."""
    start = time.perf_counter()
    sc = small_scenario(2, 2, 2, 0, bandwidth_hz=1e6)
    sc = sc.with_params(weights=np.array([1.0, 1.0]), qos_min=np.array([1e6, 2e6]))
    occ = np.array([[1, 1], [1, 0]])
    rep = evaluate(sc, occ, normalize_power(occ, sc.total_power))
    # overwrite the rates with round numbers; the reward code reads only these fields
    rep.user_totals = np.array([3e6, 1e6])
    rep.objective = 4e6
    rep.pdsc_ok = np.array([[True, False], [True, True]])
    rep.extras["occupancy"] = occ
    cases = [
        ("sa_internal_violation", sa_internal_reward(np.array([[1, 1], [0, 0]]),
                                                     sc.with_params(max_per_subcarrier=1)), -5.0),
        ("sa_internal_ok", sa_internal_reward(occ, sc), 0.0),
        ("sa_joint", sa_joint_reward(rep), 1.5 * math.exp(0.25 * 4.0)),
        ("pa_internal_agent0", pa_internal_reward(sc, rep, 0), 3.0 * 2.0),
        ("pa_internal_agent1", pa_internal_reward(sc, rep, 1), -8.0 + 3.0 * -1.0),
        ("pa_joint_agent0", pa_joint_reward(rep, sc, 0), 0.75 * 16.0 * math.exp(0.45 * 4.0)),
        ("pa_joint_agent1", pa_joint_reward(rep, sc, 1), 0.25 * 16.0 * math.exp(0.45 * 4.0)),
    ]
    out = []
    for name, got, want in cases:
        err = abs(got - want) / max(abs(want), 1.0)
        out.append(Check(8, name, err <= 1e-15, got, want))
    shares = share_factors(rep, sc)
    out.append(Check(8, "share_sum", abs(shares.sum() - 1.0) <= 1e-15, float(shares.sum()), 1.0))
    out.append(_timed(8, 1.0, start))
    return out


# --- gradients ---------------------------------------------------------------------------

def gradient_specs() -> dict[str, NetworkSpec]:
    small_sa = SaNetConfig(n_full=16, d_res=1, penultimate=8, group_units=4)
    small_pa = PaNetConfig(n_full=16, d_res=1, penultimate=8, group_units=4, conv_channels=(2, 3))
    return {
        "fc": NetworkSpec((5,), (FC(5, 4, "tanh"), FC(4, 3, "sigmoid"))),
        "resblock": NetworkSpec((6,), (ResBlock(6), FC(6, 2))),
        "conv": NetworkSpec((2, 6, 5), (Conv(2, 3, 3), Flatten())),
        "maxpool": NetworkSpec((2, 6, 4), (MaxPool(2), Flatten())),
        "sa_actor": sa_actor_spec(3, 2, small_sa),
        "sa_critic": sa_critic_spec(3, 2, small_sa),
        "pa_actor": pa_actor_spec(2, small_pa),
        "pa_critic": pa_critic_spec(3, 2, small_pa),
        "pa_state_cnn": state_cnn_spec(3, 2, small_pa),
    }


def check_gradient_suite(seed: int = 0) -> list[Check]:
    start = time.perf_counter()
    out = []
    for name, spec in gradient_specs().items():
        err = check_gradients(spec, seed=seed).max_error
        out.append(Check(3, f"{name}_max_rel_error", bool(err < 1e-4), err, 1e-4))
    out.append(_timed(3, 30.0, start))
    return out


# --- oracle ------------------------------------------------------------------------------

ORACLE_SIZES = ((2, 2, 1), (2, 2, 2), (3, 2, 2), (3, 3, 1), (3, 3, 2), (4, 2, 2), (4, 3, 2),
                (2, 3, 2), (3, 2, 1), (4, 3, 1))


def _score(report) -> float:
    return report.objective_normalized if report.feasible else 0.0


def check_oracle_dominance(instances: int = 20, seed: int = 0) -> list[Check]:
    start = time.perf_counter()
    worst_ratio = 0.0
    worst_refine = math.inf   # min of (L=8 objective - L=4 objective)
    for k in range(instances):
        m, n_f, cap = ORACLE_SIZES[k % len(ORACLE_SIZES)]
        sc = small_scenario(m, n_f, cap, seed + k)
        best = exhaustive_solve(sc, 4)
        opt = 0.0 if best is None else _score(best.report)
        heur = [heuristic_solve(sc, greedy_sa(sc), 4), heuristic_solve(sc, random_sa(sc, k), 4),
                oma_solve(sc, 4)]
        for sol in heur:
            h = _score(sol.report)
            ratio = h / opt if opt > 0 else (0.0 if h == 0 else math.inf)
            worst_ratio = max(worst_ratio, ratio)
        fine = exhaustive_solve(sc, 8)
        fine_obj = 0.0 if fine is None else _score(fine.report)
        worst_refine = min(worst_refine, fine_obj - opt)
    return [Check(4, "heuristic_over_optimal_max", worst_ratio <= 1 + 1e-9, worst_ratio, 1 + 1e-9),
            Check(4, "refinement_min_gain", worst_refine >= 0.0, worst_refine, 0.0),
            _timed(4, 120.0, start)]


EPS_SWEEP = (0.0, 1e-2, 1e-1)


def check_crossover(seeds: Iterable[int] = range(6), size=(3, 3, 3)) -> list[Check]:
    """NOMA (exhaustive) vs OMA gap over the imperfect-SIC sweep."""
    start = time.perf_counter()
    monotone = True
    worst_increase = -math.inf
    crossovers = 0
    for s in seeds:
        base = small_scenario(*size, s)
        oma = _score(oma_solve(base.with_params(sic_error_sq=0.0), 4).report)
        gaps = []
        for eps in EPS_SWEEP:
            sc = base.with_params(sic_error_sq=eps)
            best = exhaustive_solve(sc, 4)
            noma = 0.0 if best is None else _score(best.report)
            gaps.append(noma - oma)
        steps = np.diff(gaps)
        worst_increase = max(worst_increase, float(steps.max()))
        monotone &= bool(np.all(steps <= 1e-9 * max(1.0, abs(gaps[0]))))
        # OMA >= NOMA at the strongest residual interference
        crossovers += gaps[-1] <= 1e-9 * max(1.0, oma)
    return [Check(6, "gap_max_increase", monotone, worst_increase, 0.0),
            Check(6, "crossover_seeds", crossovers >= 1, float(crossovers), 1.0),
            _timed(6, 300.0, start)]


POWER_SWEEP_DBM = (30.0, 34.0, 38.0, 42.0, 46.0)


def check_power_trend(seeds: Iterable[int] = range(3), size=(3, 2, 2)) -> list[Check]:
    start = time.perf_counter()
    worst_drop = -math.inf   # max over seeds of (previous - next) objective
    for s in seeds:
        base = small_scenario(*size, s)
        objs = []
        for p in POWER_SWEEP_DBM:
            best = exhaustive_solve(base.with_params(total_power=dbm_to_watts(p)), 4)
            objs.append(0.0 if best is None else _score(best.report))
        worst_drop = max(worst_drop, float(-np.diff(objs).min()))
    return [Check(7, "objective_max_drop", worst_drop <= 0.0, worst_drop, 0.0),
            _timed(7, 120.0, start)]


# --- training ----------------------------------------------------------------------------

TRAINING_SEEDS = (0, 1, 2)


def check_training(seeds: Iterable[int] = TRAINING_SEEDS, config=None,
                   budget_s: float = 900.0) -> list[Check]:
    """Desk-scale training against the oracle and random assignment + grid power."""
    from .trainer import TrainConfig, policy_solution, train

    out = []
    for s in seeds:
        start = time.perf_counter()
        sc = small_scenario(4, 3, 2, s)
        cfg = (config or TrainConfig.desk()).replace(seed=s)
        agents, _ = train(sc, cfg)
        _, _, rep = policy_solution(sc, agents, cfg)
        drl = _score(rep)
        best = exhaustive_solve(sc, 4)
        opt = 0.0 if best is None else _score(best.report)
        rnd = _score(heuristic_solve(sc, random_sa(sc, s), 4).report)
        ratio = drl / opt if opt > 0 else 0.0
        out.append(Check(5, f"seed{s}_fraction_of_optimal", ratio >= 0.9, ratio, 0.9))
        out.append(Check(5, f"seed{s}_margin_over_random", drl > rnd, drl - rnd, 0.0))
        out.append(_timed(5, budget_s, start))
    return out


# --- complexity --------------------------------------------------------------------------

COMPLEXITY_SETTINGS = ((128, 3, 4, 3), (64, 2, 6, 4))


def _audit(n_full: int, d_res: int, m: int, n_f: int):
    from .trainer import TrainConfig, complexity_audit

    cfg = TrainConfig(sa_net=SaNetConfig(n_full=n_full, d_res=d_res),
                      pa_net=PaNetConfig(n_full=n_full, d_res=d_res), pa_steps=4)
    return complexity_audit(small_scenario(m, n_f, 2, 0), cfg)


def check_complexity() -> list[Check]:
    start = time.perf_counter()
    out = []
    for setting in COMPLEXITY_SETTINGS:
        a = _audit(*setting)
        tag = "x".join(map(str, setting))
        for part, ratio in (("sa", a.sa_ratio), ("pa", a.pa_ratio)):
            out.append(Check(9, f"{part}_{tag}_measured_over_predicted", 0.5 <= ratio <= 2.0,
                             ratio, 2.0))
    n_full, d_res, m, n_f = COMPLEXITY_SETTINGS[0]
    base = _audit(n_full, d_res, m, n_f)
    for label, other in (("double_n_full", _audit(2 * n_full, d_res, m, n_f)),
                         ("double_users", _audit(n_full, d_res, 2 * m, n_f))):
        for part in ("sa", "pa"):
            measured = getattr(other, f"{part}_measured") / getattr(base, f"{part}_measured")
            predicted = getattr(other, f"{part}_predicted") / getattr(base, f"{part}_predicted")
            rel = abs(measured / predicted - 1.0)
            out.append(Check(9, f"{part}_{label}_ratio_rel_error", rel <= 0.1, rel, 0.1))
    out.append(_timed(9, 60.0, start))
    return out


# --- suites ------------------------------------------------------------------------------

SUITES: dict[str, tuple[Callable[[], list[Check]], ...]] = {
    "core-math": (check_core_math, check_power_budget, check_rewards),
    "gradients": (check_gradient_suite,),
    "oracle": (check_oracle_dominance, check_crossover, check_power_trend),
    "training": (check_training,),
    "complexity": (check_complexity,),
}


def run_suite(name: str, **overrides) -> list[Check]:
    """Run every check of a suite; ``overrides`` go to the training check."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    out = []
    for fn in SUITES[name]:
        out.extend(fn(**overrides) if fn is check_training else fn())
    return out


def format_table(checks: list[Check]) -> str:
    lines = [f"{'crit':>4}  {'check':<44} {'result':<6} {'value':>14} {'threshold':>12}"]
    for c in checks:
        lines.append(f"{c.criterion:>4}  {c.name:<44} {'PASS' if c.passed else 'FAIL':<6} "
                     f"{c.value:>14.6g} {c.threshold:>12.6g}")
    return "\n".join(lines)


def write_csv(checks: list[Check], path) -> None:
    """Deterministic rows only (timings are left out)."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in checks:
            if not c.timing:
                w.writerow([c.criterion, c.name, int(c.passed), repr(float(c.value)),
                            repr(float(c.threshold))])
