"""The ten acceptance criteria, each at its stated tolerance and time limit.

Every test prints (and records for the terminal summary) one PASS/FAIL line.
The training criterion takes up to 15 minutes per seed.
"""

import pytest

from drljrm import verify
from drljrm.cli import main
from drljrm.verify import Check


def _assert(ok, checks):
    assert ok, "\n" + verify.format_table(checks)


def test_criterion_01_perfect_sic_rates(report_criterion):
    checks = verify.check_core_math(100)
    _assert(report_criterion(1, "perfect-SIC rates vs independent formula", checks), checks)


def test_criterion_02_power_budget(report_criterion):
    checks = verify.check_power_budget(10_000)
    _assert(report_criterion(2, "power budget over random trajectories", checks), checks)


def test_criterion_03_gradients(report_criterion):
    checks = verify.check_gradient_suite()
    _assert(report_criterion(3, "finite-difference gradients", checks), checks)


def test_criterion_04_oracle_dominance(report_criterion):
    checks = verify.check_oracle_dominance(20)
    _assert(report_criterion(4, "exhaustive dominance and grid refinement", checks), checks)


def test_criterion_05_training(report_criterion):
    checks = verify.check_training()
    _assert(report_criterion(5, "desk training vs oracle and random+grid", checks), checks)


def test_criterion_06_sic_error_crossover(report_criterion):
    checks = verify.check_crossover()
    _assert(report_criterion(6, "NOMA-OMA gap under imperfect SIC", checks), checks)


def test_criterion_07_power_trend(report_criterion):
    checks = verify.check_power_trend()
    _assert(report_criterion(7, "objective nondecreasing in total power", checks), checks)


def test_criterion_08_rewards(report_criterion):
    checks = verify.check_rewards()
    _assert(report_criterion(8, "reward values and share factors", checks), checks)


def test_criterion_09_complexity(report_criterion):
    checks = verify.check_complexity()
    _assert(report_criterion(9, "measured vs predicted MACs", checks), checks)


SWEEP = """
num_users = 3
num_subcarriers = 2
axis = P_total
values = 34, 40
solvers = exhaustive, greedy+grid, random+grid, oma, drl-jrm
instances = 2
metrics = objective, average_throughput, q_eff, qos_rate, feasible
train_epochs = 40
train_pa_steps = 5
train_sa_buffer = 64
train_pa_buffer = 64
train_batch_size = 16
"""


def _pipeline(out, config):
    assert main(["run", str(config), "--out", str(out / "sweep")]) == 0
    for suite in ("core-math", "gradients", "complexity"):
        main(["verify", suite, "--csv", str(out / f"verify_{suite}.csv")])


def test_criterion_10_bitwise_replay(tmp_path, report_criterion):
    config = tmp_path / "sweep.cfg"
    config.write_text(SWEEP)
    first, second = tmp_path / "first", tmp_path / "second"
    _pipeline(first, config)
    _pipeline(second, config)
    names = sorted(p.relative_to(first) for p in first.rglob("*.csv"))
    assert len(names) == 5 + 3
    differing = [str(n) for n in names if (first / n).read_bytes() != (second / n).read_bytes()]
    checks = [Check(10, "differing_csv_files", not differing, len(differing), 0),
              Check(10, "csv_files_compared", len(names) == 8, len(names), 8)]
    _assert(report_criterion(10, "verify pipeline replays bit-identically", checks),
            checks + [Check(10, name, False, 1, 0) for name in differing])
