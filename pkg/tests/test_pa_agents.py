import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_scenario
from drljrm.noma import evaluate
from drljrm.pa_agents import (
    PaNetConfig,
    apply_pa_action,
    build_pa_agents,
    category_mask,
    cnn_canvas,
    discretize_pa_action,
    encode_pa_state,
    full_mask,
    initial_indicator,
    ipd,
    pa_internal_reward,
    pa_joint_reward,
    pa_rollout,
    pa_state_dim,
    random_mask,
    self_states,
    share_factors,
)

SMALL = PaNetConfig(n_full=8, d_res=1, penultimate=8, group_units=2, conv_channels=(2, 2), cnn_fc=1)


def _report(sc, occ, powers):
    rep = evaluate(sc, occ, powers)
    rep.extras["occupancy"] = np.asarray(occ)
    return rep


def test_full_mask_observes_everything():
    assert ipd(full_mask(4, 3)) == 1.0
    assert full_mask(4, 3).shape == (3, pa_state_dim(3))


@pytest.mark.parametrize("n_f", [1, 2, 3, 5])
def test_hiding_one_subcarrier_category(n_f):
    for name in ("gain", "assignment", "indicator"):
        assert ipd(category_mask(3, n_f, [name])) == pytest.approx(1 - n_f / (3 * n_f + 2))
    assert ipd(category_mask(3, n_f, ["weight"])) == pytest.approx(1 - 1 / (3 * n_f + 2))


@given(zeta=st.floats(0, 1), seed=st.integers(0, 100))
def test_random_mask_hits_target_fraction(zeta, seed):
    mask = random_mask(4, 3, zeta, seed)
    assert ipd(mask) == pytest.approx(round(zeta * mask.size) / mask.size)


def test_random_mask_rejects_bad_zeta():
    with pytest.raises(ValueError):
        random_mask(3, 2, 1.5)


def test_discretize_thresholds():
    raw = [-1.0, -0.34, -1 / 3, 0.0, 1 / 3, 0.34, 1.0]
    assert discretize_pa_action(raw).tolist() == [-1, -1, 0, 0, 0, 1, 1]


def test_apply_action_example():
    assert apply_pa_action([5e-5], [1], 1e-5)[0] == pytest.approx(6e-5, rel=1e-12)
    assert apply_pa_action([5e-6], [-1], 1e-5).tolist() == [0.0]
    assert apply_pa_action([1.0, 1.0], [1, 1], 0.5, assigned=[1, 0]).tolist() == [1.5, 0.0]


@given(v=st.lists(st.floats(0, 10), min_size=1, max_size=6), seed=st.integers(0, 50))
def test_apply_action_never_negative(v, seed):
    a = np.random.default_rng(seed).integers(-1, 2, len(v))
    assert np.all(apply_pa_action(v, a, 3.0) >= 0)


def test_self_state_layout():
    sc = make_scenario([[3.0, 1.0]], weights=np.array([2.0, 1.0]), qos_min=np.array([0.5, 0.0]))
    s = self_states(sc, [[1, 1]], [[0.5, 2.0]])
    assert s.shape == (2, 5)
    assert s[0].tolist() == [2.0, 0.5, pytest.approx(0.1 * math.log10(4.0)), 1.0, 0.5]
    mine, others = encode_pa_state(sc, [[1, 1]], [[0.5, 2.0]], 0, [[1, 1, 0, 1, 1]])
    assert np.array_equal(mine, s[0])
    assert others.tolist() == [[1.0, 0.0, 0.0, 1.0, 2.0]]


def test_internal_reward_cases():
    sc = make_scenario([[2.0, 1.0]], qos_min=np.array([0.0, 0.0]), pdsc_threshold=0.5)
    ok = _report(sc, [[1, 1]], [[0.5, 3.0]])     # weak user gets more power: PDSC holds
    bad = _report(sc, [[1, 1]], [[3.0, 0.5]])
    assert ok.pdsc_ok.all() and not bad.pdsc_ok.all()
    margin = ok.user_totals[1] / sc.bandwidth
    assert pa_internal_reward(sc, ok, 1) == pytest.approx(3.0 * margin)
    assert pa_internal_reward(sc, bad, 0) - 3.0 * bad.user_totals[0] == pytest.approx(
        -8.0 * (not bad.pdsc_ok[0, 0]))
    # zero margin and no violation -> exactly 0
    sc0 = make_scenario([[1.0]], qos_min=np.array([1.0]))
    rep = _report(sc0, [[1]], [[1.0]])
    sc0 = make_scenario([[1.0]], qos_min=rep.user_totals.copy())
    assert pa_internal_reward(sc0, rep, 0) == 0.0


def test_share_factors_sum_to_one():
    sc = make_scenario([[2.0, 1.0], [1.0, 3.0]], weights=np.array([1.0, 2.0]))
    rep = _report(sc, [[1, 0], [0, 1]], [[1.0, 0.0], [0.0, 1.0]])
    f = share_factors(rep, sc)
    assert f.sum() == pytest.approx(1.0)
    assert f[1] / f[0] == pytest.approx(2 * rep.user_totals[1] / rep.user_totals[0])
    total = 16.0 * math.exp(0.45 * rep.objective_normalized)
    assert pa_joint_reward(rep, sc, 1) == pytest.approx(f[1] * total)


def test_share_factors_all_zero_when_nothing_served():
    sc = make_scenario([[1.0, 1.0]])
    rep = _report(sc, [[0, 0]], [[0.0, 0.0]])
    assert share_factors(rep, sc).tolist() == [0.0, 0.0]


def test_canvas_sizes():
    assert [cnn_canvas(n) for n in (1, 10, 11, 14, 15)] == [10, 10, 14, 14, 18]


def test_zero_steps_keeps_equal_split():
    sc = make_scenario([[2.0, 1.0], [1.0, 1.0]], total_power=4.0)
    mac = build_pa_agents(2, 2, SMALL)
    occ = np.array([[1, 1], [0, 1]])
    power, history, rep = pa_rollout(sc, occ, mac, 0, 0.1)
    assert history == []
    assert power.powers.sum() == pytest.approx(4.0)
    np.testing.assert_allclose(power.powers, initial_indicator(occ) * 4.0 / 3.0)


def test_single_user_gets_full_power():
    sc = make_scenario([[1.0], [2.0]], total_power=2.0)
    mac = build_pa_agents(1, 2, SMALL)
    power, history, rep = pa_rollout(sc, [[1], [1]], mac, 5, 0.5, explore=True, noise_std=0.3,
                                     rng=np.random.default_rng(0), resample_prob=0.2)
    assert len(history) == 5 and history[-1].done
    if power.powers.sum() > 0:
        assert power.powers.sum() == pytest.approx(2.0)
        assert power.powers[np.array([[1], [1]]) == 0].sum() == 0


def test_rollout_respects_budget_and_assignment():
    rng = np.random.default_rng(3)
    sc = make_scenario(rng.random((3, 4)), total_power=5.0)
    mac = build_pa_agents(4, 3, SMALL, seed=2)
    occ = np.array([[1, 1, 0, 0], [0, 0, 1, 0], [0, 1, 0, 1]])
    power, history, _ = pa_rollout(sc, occ, mac, 6, 0.3, explore=True, noise_std=0.5, rng=rng,
                                   resample_prob=0.5)
    assert np.all(power.powers >= 0)
    assert np.all(power.powers[occ == 0] == 0)
    if power.powers.sum() > 0:
        assert power.powers.sum() == pytest.approx(5.0, rel=1e-12)
    for step in history:
        assert step.states.shape == (4, pa_state_dim(3)) and step.actions.shape == (4, 3)
