import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drljrm.noma import (
    batch_evaluate,
    effective_throughput,
    evaluate,
    normalize_power,
    pdsc_satisfied,
    qos_satisfaction_rate,
    rate,
    residual_interference,
    sic_order,
    slot_layout,
)
from drljrm.scenario import ScenarioConfig, generate
from drljrm.verify import perfect_sic_rates

from conftest import make_scenario


def test_sic_order_strongest_first():
    sc = make_scenario([[4.0, 1.0, 9.0]])
    assert sic_order(sc, np.ones((1, 3)))[0].tolist() == [2, 0, 1]


def test_sic_order_singleton_and_ties():
    sc = make_scenario([[4.0, 1.0, 9.0], [2.0, 2.0, 2.0]])
    order = sic_order(sc, np.array([[0, 1, 0], [1, 1, 1]]))
    assert order[0].tolist() == [1]
    assert order[1].tolist() == [0, 1, 2]


def test_sic_order_rejects_wrong_shape():
    with pytest.raises(ValueError):
        sic_order(make_scenario([[1.0, 2.0]]), np.ones((2, 2)))


def test_residual_interference_examples():
    sc = make_scenario([[2.0, 1.0, 1.0]], sic_error_sq=1e-4)
    order = sic_order(sc, np.ones((1, 3)))
    p = np.ones((1, 3))
    assert residual_interference(sc, order, p, 0, 0) == pytest.approx(2e-4, rel=1e-12)
    assert residual_interference(sc, order, p, 0, 2) == 0.0
    perfect = sc.with_params(sic_error_sq=0.0)
    assert all(residual_interference(perfect, order, p, 0, j) == 0.0 for j in range(3))


def test_single_user_unit_snr_gives_one_bit_per_hz():
    sc = make_scenario([[1.0], [1.0]], bandwidth=2e6)
    order = sic_order(sc, np.ones((2, 1)))
    p = np.ones((2, 1))
    assert rate(sc, order, p, 0, 0) == pytest.approx(1e6, rel=1e-15)
    assert rate(sc, order, np.zeros((2, 1)), 0, 0) == 0.0


def test_two_user_hand_evaluated_rate():
    # strong user 0 (gain 1, power 1) cancels user 1 (gain 0.5, power 3) perfectly
    sc = make_scenario([[1.0, 0.5]])
    order = sic_order(sc, np.ones((1, 2)))
    p = np.array([[1.0, 3.0]])
    assert rate(sc, order, p, 0, 0) == pytest.approx(1.0, rel=1e-15)
    # weak user sees the strong user's power at its own gain: 1.5 / (0.5 + 1)
    assert rate(sc, order, p, 0, 1) == pytest.approx(1.0, rel=1e-15)


def test_rate_index_errors():
    sc = make_scenario([[1.0, 0.5]])
    order = sic_order(sc, np.array([[1, 0]]))
    with pytest.raises(IndexError):
        rate(sc, order, np.ones((1, 2)), 0, 1)
    with pytest.raises(IndexError):
        residual_interference(sc, order, np.ones((1, 2)), 0, 3)


def test_evaluate_zero_power():
    sc = make_scenario([[1.0, 2.0]], qos_min=np.array([0.1, 0.2]))
    rep = evaluate(sc, np.ones((1, 2)), np.zeros((1, 2)))
    assert rep.objective == 0.0
    assert not rep.flags["C5"]


def _feasible_pair():
    # user 0 strong (gain 2), user 1 weak (gain 1); p = (1, 3), noise 1, p_delta 0.5
    return make_scenario([[2.0, 1.0]], qos_min=np.array([1.5, 1.3]), total_power=4.0,
                         pdsc_threshold=0.5)


def test_hand_built_feasible_case():
    sc = _feasible_pair()
    rep = evaluate(sc, np.ones((1, 2)), np.array([[1.0, 3.0]]))
    assert rep.feasible, rep.flags
    assert rep.rates[0, 0] == pytest.approx(math.log2(3.0), rel=1e-15)
    assert rep.rates[0, 1] == pytest.approx(math.log2(2.5), rel=1e-15)
    assert rep.objective == pytest.approx(math.log2(7.5), rel=1e-15)


def test_power_overrun_fails_c1():
    sc = _feasible_pair()
    rep = evaluate(sc, np.ones((1, 2)), np.array([[2.0, 6.0]]))
    assert not rep.flags["C1"]


def test_non_binary_assignment_fails_c6_and_crowding_fails_c4():
    sc = make_scenario([[2.0, 1.0]], max_per_subcarrier=1)
    rep = evaluate(sc, np.array([[1, 1]]), np.array([[0.5, 0.5]]))
    assert not rep.flags["C4"]
    rep = evaluate(sc.with_params(max_per_subcarrier=2), np.array([[2, 0]]),
                   np.array([[1.0, 0.0]]))
    assert not rep.flags["C6"]


def test_pdsc_examples():
    sc = make_scenario([[1.0, 1.0]], pdsc_threshold=0.1)
    order = [np.array([0, 1])]
    assert pdsc_satisfied(sc, order, np.array([[0.5, 0.0]]), 0, 0)
    assert not pdsc_satisfied(sc, order, np.array([[0.5, 0.4]]), 0, 1)
    # boundary equality: 1 * (0.75 - 0.5) == 0.25 exactly
    exact = sc.with_params(pdsc_threshold=0.25)
    assert pdsc_satisfied(exact, order, np.array([[0.5, 0.75]]), 0, 1)


def test_normalize_power_examples():
    assert np.array_equal(normalize_power([1.0, 1.0, 2.0], 4.0), [1.0, 1.0, 2.0])
    assert np.array_equal(normalize_power(np.zeros(3), 4.0), np.zeros(3))
    with pytest.raises(ValueError):
        normalize_power([-1.0, 2.0], 1.0)


@settings(max_examples=100, deadline=None)
@given(v=arrays(np.float64, st.integers(1, 12), elements=st.floats(0, 1e6)),
       total=st.floats(1e-6, 1e3))
def test_normalized_power_meets_budget(v, total):
    p = normalize_power(v, total)
    assert np.all(p >= 0)
    if v.sum() > 0:
        assert p.sum() == pytest.approx(total, rel=1e-12)


def test_qos_metrics():
    sc = make_scenario([[1.0, 1.0, 1.0]], qos_min=np.array([0.5, 0.5, 10.0]))
    rep = evaluate(sc, np.array([[1, 0, 0]]), np.array([[1.0, 0.0, 0.0]]))
    assert qos_satisfaction_rate(rep, sc) == pytest.approx(1 / 3)
    assert effective_throughput(rep, sc) == rep.user_totals[0]
    rep.user_totals = np.array([1.0, 1.0, 20.0])
    assert qos_satisfaction_rate(rep, sc) == 1.0
    assert effective_throughput(rep, sc) == 22.0
    rep.user_totals = np.array([0.0, 0.0, 0.0])
    assert effective_throughput(rep, sc) == 0.0
    rep.user_totals = np.array([1.0, 0.0, 20.0])
    sc2 = sc.with_params(qos_min=np.array([0.5, 0.5, 10.0]))
    assert qos_satisfaction_rate(rep, sc2) == pytest.approx(2 / 3)


def test_half_meet():
    sc = make_scenario([[1.0, 1.0]], qos_min=np.array([0.1, 100.0]))
    rep = evaluate(sc, np.array([[1, 0]]), np.array([[1.0, 0.0]]))
    assert qos_satisfaction_rate(rep, sc) == 0.5


def _random_case(seed):
    rng = np.random.default_rng(seed)
    m, n_f = int(rng.integers(1, 6)), int(rng.integers(1, 4))
    sc = generate(ScenarioConfig(num_users=m, num_subcarriers=n_f, max_per_subcarrier=m,
                                 sic_error_sq=float(rng.choice([0.0, 1e-4, 1e-1])),
                                 rng_seed=seed))
    occ = (rng.random((n_f, m)) < 0.6).astype(np.int64)
    p = normalize_power(occ * rng.random((n_f, m)), sc.total_power)
    return sc, occ, p


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_batch_evaluate_matches_scalar_evaluate(seed):
    sc, occ, p = _random_case(seed)
    layout = slot_layout(sc, occ)
    obj, c2, c5 = batch_evaluate(sc, layout, p[layout.subcarriers, layout.users][None])
    rep = evaluate(sc, occ, p)
    assert obj[0] == pytest.approx(rep.objective, rel=1e-12, abs=1e-300)
    assert bool(c2[0]) == rep.flags["C2"]
    assert bool(c5[0]) == rep.flags["C5"]


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_perfect_sic_matches_independent_formula(seed):
    sc, occ, p = _random_case(seed)
    sc = sc.with_params(sic_error_sq=0.0)
    want = perfect_sic_rates(sc.gains, occ, p, sc.noise_var, sc.subcarrier_bandwidth)
    np.testing.assert_allclose(evaluate(sc, occ, p).rates, want, rtol=1e-12, atol=0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_rates_nonincreasing_in_sic_error(seed):
    sc, occ, p = _random_case(seed)
    low = evaluate(sc.with_params(sic_error_sq=1e-4), occ, p).rates
    high = evaluate(sc.with_params(sic_error_sq=1e-1), occ, p).rates
    assert np.all(high <= low * (1 + 1e-12))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_unassigned_slots_carry_no_rate(seed):
    sc, occ, p = _random_case(seed)
    rep = evaluate(sc, occ, p)
    assert np.all(rep.rates[occ == 0] == 0)
    assert np.all(rep.pdsc_ok[occ == 0])
