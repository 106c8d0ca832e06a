import json
import subprocess
import sys

import pytest

from drljrm.cli import BUDGET, CONFIG, OK, build_parser, main

SCENARIO = "num_users = 2\nnum_subcarriers = 2\nrng_seed = 3\n"
TRAIN = SCENARIO + ("train_epochs = 3\ntrain_pa_steps = 2\ntrain_batch_size = 4\n"
                    "train_sa_buffer = 8\ntrain_pa_buffer = 8\n")


def test_run_writes_csvs(tmp_path, capsys):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(SCENARIO + "axis = P_total\nvalues = 30, 40\nsolvers = exhaustive, oma\n"
                   "instances = 1\nmetrics = objective, feasible\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == OK
    assert (tmp_path / "out" / "objective.csv").exists()
    assert (tmp_path / "out" / "feasible.csv").exists()


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("axis = nowhere\nvalues = 1\n")
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == CONFIG
    assert "error" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == CONFIG


def test_budget_exit_code(tmp_path):
    cfg = tmp_path / "big.cfg"
    cfg.write_text(SCENARIO + "axis = M\nvalues = 2\nsolvers = exhaustive\ninstances = 1\n"
                   "budget = 1\n")
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == BUDGET


def test_train_then_eval(tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text(TRAIN)
    ck, log = tmp_path / "agents.npz", tmp_path / "log.csv"
    assert main(["train", str(cfg), "--checkpoint", str(ck), "--log", str(log)]) == OK
    assert ck.exists() and log.exists()
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(ck), "--scenario", str(cfg), "--episodes", "2"]) == OK
    out = json.loads(capsys.readouterr().out)
    assert out["episodes"] == 2
    assert set(out) >= {"objective", "q_eff", "qos_rate", "assignment"}


def test_eval_from_scenario_dump(tmp_path, capsys):
    from drljrm.scenario import dump_scenario, generate, load_config

    cfg = tmp_path / "train.cfg"
    cfg.write_text(TRAIN)
    ck = tmp_path / "agents.npz"
    main(["train", str(cfg), "--checkpoint", str(ck)])
    dump = tmp_path / "sc.csv"
    dump_scenario(generate(load_config(cfg)), dump)
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(ck), "--scenario", str(dump)]) == OK
    assert json.loads(capsys.readouterr().out)["episodes"] == 1


def test_eval_rejects_mismatched_scenario(tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text(TRAIN)
    ck = tmp_path / "agents.npz"
    main(["train", str(cfg), "--checkpoint", str(ck)])
    other = tmp_path / "other.cfg"
    other.write_text("num_users = 3\nnum_subcarriers = 2\n")
    assert main(["eval", "--checkpoint", str(ck), "--scenario", str(other)]) == CONFIG


def test_verify_suite_choices():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["verify", "no-such-suite"])


def test_verify_core_math(tmp_path, capsys):
    out = tmp_path / "checks.csv"
    assert main(["verify", "core-math", "--csv", str(out)]) == OK
    assert "checks passed" in capsys.readouterr().out
    assert out.read_text().startswith("criterion,check,passed,value,threshold")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "drljrm", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "verify" in res.stdout
