import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drljrm.scenario import (
    ConfigError,
    ScenarioConfig,
    dbm_to_watts,
    dump_scenario,
    generate,
    load_config,
    load_scenario,
    parse_config_text,
    scenario_config_from_dict,
)


def test_dbm_to_watts_reference_points():
    assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-15)
    assert dbm_to_watts(30.0) == pytest.approx(1.0, rel=1e-15)
    assert dbm_to_watts(42.0) == pytest.approx(15.848931924611133, rel=1e-12)


def test_dbm_to_watts_rejects_non_finite():
    with pytest.raises(ConfigError):
        dbm_to_watts(math.inf)


def test_noise_variance_per_subcarrier():
    sc = generate(ScenarioConfig(num_users=60, num_subcarriers=64, max_per_subcarrier=4,
                                 bandwidth_hz=5e6, noise_psd_dbm_per_hz=-173.0))
    expected = 5e6 * 10 ** (-173 / 10) * 1e-3 / 64
    assert sc.noise_var == pytest.approx(expected, rel=1e-12)
    assert sc.subcarrier_bandwidth == 5e6 / 64


def test_weights_are_distance_ratios():
    sc = generate(ScenarioConfig(num_users=5, rng_seed=3))
    assert np.array_equal(sc.weights, sc.distances / sc.distances.max())
    assert sc.weights.max() == 1.0


def test_two_user_weight_example(scenario_factory):
    d = np.array([100.0, 200.0])
    assert np.array_equal(d / d.max(), [0.5, 1.0])


def test_same_seed_is_bitwise_identical():
    a = generate(ScenarioConfig(rng_seed=11))
    b = generate(ScenarioConfig(rng_seed=11))
    c = generate(ScenarioConfig(rng_seed=12))
    assert a.same_as(b)
    assert not a.same_as(c)


def test_arrays_are_read_only():
    sc = generate(ScenarioConfig())
    with pytest.raises(ValueError):
        sc.gains[0, 0] = 1.0


@pytest.mark.parametrize("changes", [
    {"num_users": 0}, {"num_subcarriers": 0}, {"max_per_subcarrier": 5},
    {"max_per_subcarrier": 0}, {"sic_error_sq": -1.0}, {"radius_min": 0.0},
    {"radius_min": 400.0}, {"qos_std": -1.0}, {"total_power_dbm": math.nan},
])
def test_invalid_configs_rejected(changes):
    with pytest.raises(ConfigError):
        generate(ScenarioConfig(**changes))


@settings(max_examples=30, deadline=None)
@given(m=st.integers(1, 8), n_f=st.integers(1, 6), seed=st.integers(0, 2**31))
def test_generated_scenarios_are_well_formed(m, n_f, seed):
    sc = generate(ScenarioConfig(num_users=m, num_subcarriers=n_f, max_per_subcarrier=1,
                                 rng_seed=seed))
    assert sc.gains.shape == (n_f, m)
    assert np.all(sc.gains > 0)
    assert np.all((sc.distances >= 30.0) & (sc.distances <= 300.0))
    assert np.all(sc.qos_min >= 1e3)


def test_config_text_parsing():
    values = parse_config_text("""
        # comment line
        num_users = 3          # trailing comment
        total_power_dbm = 42.5
        values = 1, 2, 3
        flag = yes
        name = hello
    """)
    assert values == {"num_users": 3, "total_power_dbm": 42.5, "values": [1, 2, 3],
                      "flag": True, "name": "hello"}


def test_config_errors():
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign")
    with pytest.raises(ConfigError):
        parse_config_text("= 3")
    with pytest.raises(ConfigError):
        scenario_config_from_dict({"num_users": [1, 2]})
    with pytest.raises(ConfigError):
        scenario_config_from_dict({"num_users": "many"})


def test_load_config_ignores_unknown_keys(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("num_users = 2\nmax_per_subcarrier = 2\naxis = M\n")
    cfg = load_config(path)
    assert cfg.num_users == 2 and cfg.max_per_subcarrier == 2


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 5), n_f=st.integers(1, 4))
def test_dump_load_round_trip_is_exact(seed, m, n_f):
    sc = generate(ScenarioConfig(num_users=m, num_subcarriers=n_f, max_per_subcarrier=1,
                                 rng_seed=seed))
    assert load_scenario(dump_scenario(sc)).same_as(sc)


def test_dump_to_file(tmp_path):
    sc = generate(ScenarioConfig())
    path = tmp_path / "sc.csv"
    dump_scenario(sc, path)
    assert load_scenario(path).same_as(sc)


def test_load_rejects_missing_scalars():
    with pytest.raises(ConfigError):
        load_scenario("#scalars\ntotal_power,1.0\n")
