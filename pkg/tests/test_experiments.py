import csv

import numpy as np
import pytest

from drljrm.baselines import exhaustive_solve
from drljrm.experiments import CSV_HEADER, parse_experiment, run_sweep, solve, write_csvs
from drljrm.noma import evaluate
from drljrm.scenario import ConfigError, generate, parse_config_text

SWEEP = """
num_subcarriers = 2
axis = M
values = 2, 3, 4
solvers = exhaustive, greedy+grid
instances = 2
"""


@pytest.fixture(scope="module")
def sweep():
    return parse_experiment(parse_config_text(SWEEP))


def test_parse(sweep):
    assert sweep.axis == "num_users"
    assert sweep.values == (2, 3, 4)
    assert sweep.solvers == ("exhaustive", "greedy+grid")
    assert sweep.metrics == ("objective", "average_throughput")


def test_sweep_writes_one_csv_per_metric(tmp_path, sweep):
    paths = write_csvs(run_sweep(sweep), tmp_path)
    assert sorted(p.name for p in paths) == ["average_throughput.csv", "objective.csv"]
    rows = list(csv.reader(open(tmp_path / "objective.csv")))
    assert tuple(rows[0]) == CSV_HEADER
    body = rows[1:]
    assert len(body) == 6
    assert [r[1] for r in body] == ["exhaustive"] * 3 + ["greedy+grid"] * 3
    assert [r[0] for r in body] == ["2", "3", "4"] * 2
    ex = {r[0]: float(r[2]) for r in body[:3]}
    gr = {r[0]: float(r[2]) for r in body[3:]}
    assert all(ex[k] >= gr[k] for k in ex)  # exhaustive dominates on every instance


def test_sweep_mean_matches_direct_solves(sweep):
    res = run_sweep(sweep)
    direct = []
    for k in range(sweep.instances):
        sc = generate(sweep.scenario_config(3, k))
        sol = exhaustive_solve(sc)
        direct.append(sol.report.objective_normalized if sol.report.feasible else 0.0)
    row = [r for r in res["objective"] if r[0] == 3 and r[1] == "exhaustive"][0]
    assert row[2] == pytest.approx(np.mean(direct), rel=1e-12)
    assert row[4] == sweep.instances


def test_rerun_is_bitwise_identical(tmp_path, sweep):
    a, b = tmp_path / "a", tmp_path / "b"
    write_csvs(run_sweep(sweep), a)
    write_csvs(run_sweep(sweep), b)
    for name in ("objective.csv", "average_throughput.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_shifts_instances():
    a = parse_experiment(parse_config_text(SWEEP))
    b = parse_experiment(parse_config_text(SWEEP), seed=5)
    assert b.scenario_config(2, 0).rng_seed == a.scenario_config(2, 0).rng_seed + 5


@pytest.mark.parametrize("solver", ["exhaustive", "greedy+grid", "random+grid", "oma"])
def test_solvers_return_valid_solutions(solver):
    sc = generate(parse_experiment(parse_config_text(SWEEP)).scenario_config(3, 0))
    occ, powers = solve(solver, sc, seed=1)
    rep = evaluate(sc, occ, powers)
    assert powers.sum() == pytest.approx(sc.total_power, rel=1e-9)
    assert rep.objective >= 0


def test_drl_solver_with_overrides():
    text = SWEEP + "train_epochs = 2\ntrain_pa_steps = 1\n"
    exp = parse_experiment(parse_config_text(text))
    assert dict(exp.train) == {"train_epochs": 2, "train_pa_steps": 1}
    sc = generate(exp.scenario_config(2, 0))
    occ, powers = solve("drl-jrm", sc, train_overrides=exp.train)
    assert occ.shape == sc.gains.shape


@pytest.mark.parametrize("extra", [
    "axis = bogus\n",
    "solvers = exhaustive, magic\n",
    "metrics = objective, happiness\n",
    "instances = 0\n",
    "train_not_a_field = 1\n",
])
def test_bad_experiment_configs(extra):
    text = "\n".join(l for l in SWEEP.splitlines()
                     if not l.startswith(extra.split("=")[0].strip())) + "\n" + extra
    with pytest.raises(ConfigError):
        parse_experiment(parse_config_text(text))


def test_missing_keys():
    with pytest.raises(ConfigError):
        parse_experiment(parse_config_text("values = 1, 2\n"))
    with pytest.raises(ConfigError):
        parse_experiment(parse_config_text("axis = M\n"))


def test_out_of_range_axis_value_rejected():
    with pytest.raises(ConfigError):
        parse_experiment(parse_config_text("axis = N_max\nvalues = 1, 9\n"))
