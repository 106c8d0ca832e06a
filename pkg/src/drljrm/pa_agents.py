"""Power-allocation agents: one DDPG agent per user acting on a power
indicator ``v``; actual powers are ``v`` normalised to the budget.

Each agent observes its own self-state ``[w_m, qos_m, gains_m, a_m, v_m]``
(length ``3 N_F + 2``) and a masked matrix of the other agents' self-states,
compressed by its state-CNN encoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ddpg import ActorCritic, MultiAgentCritic
from .features import gain_features, qos_features
from .nn import FC, Conv, Flatten, Grouped, MaxPool, Network, NetworkSpec, ResBlock
from .noma import PowerAllocation, RateReport, evaluate, normalize_power
from .sa_agent import perturb, shaped_exp
from .scenario import Scenario

__all__ = [
    "PaNetConfig",
    "CATEGORIES",
    "pa_state_dim",
    "self_states",
    "encode_pa_state",
    "full_mask",
    "category_mask",
    "random_mask",
    "ipd",
    "apply_pa_action",
    "discretize_pa_action",
    "pa_internal_reward",
    "pa_joint_reward",
    "share_factors",
    "initial_indicator",
    "cnn_canvas",
    "state_cnn_spec",
    "pa_actor_spec",
    "pa_critic_spec",
    "build_pa_agents",
    "PaStep",
    "pa_rollout",
]

CATEGORIES = ("weight", "qos", "gain", "assignment", "indicator")


@dataclass(frozen=True)
class PaNetConfig:
    n_full: int = 128
    d_res: int = 3
    penultimate: int = 64
    group_units: int = 16
    hierarchical: bool = True
    conv_channels: tuple = (8, 16)
    kernel: int = 3
    cnn_fc: int = 2


def pa_state_dim(num_subcarriers: int) -> int:
    return 3 * num_subcarriers + 2


def self_states(scenario: Scenario, assignment, indicator) -> np.ndarray:
    """All agents' self-states as an ``(M, 3 N_F + 2)`` matrix."""
    occ = np.asarray(assignment, dtype=np.float64)
    v = np.asarray(indicator, dtype=np.float64)
    return np.hstack([
        scenario.weights[:, None],
        qos_features(scenario)[:, None],
        gain_features(scenario).T,
        occ.T,
        v.T,
    ])


def encode_pa_state(scenario: Scenario, assignment, indicator, agent: int, mask):
    """Return agent ``agent``'s ``(self vector, masked others matrix)``."""
    s = self_states(scenario, assignment, indicator)
    mask = np.asarray(mask, dtype=np.float64)
    others = np.delete(s, agent, axis=0)
    if mask.shape != others.shape:
        raise ValueError(f"mask shape {mask.shape} != {others.shape}")
    return s[agent], others * mask


# --- information perception masks --------------------------------------------------------

def _category_columns(num_subcarriers: int) -> dict[str, slice]:
    n = num_subcarriers
    return {"weight": slice(0, 1), "qos": slice(1, 2), "gain": slice(2, 2 + n),
            "assignment": slice(2 + n, 2 + 2 * n), "indicator": slice(2 + 2 * n, 2 + 3 * n)}


def full_mask(num_users: int, num_subcarriers: int) -> np.ndarray:
    return np.ones((num_users - 1, pa_state_dim(num_subcarriers)))


def category_mask(num_users: int, num_subcarriers: int, hidden=()) -> np.ndarray:
    """Observe everything except the named categories (see ``CATEGORIES``)."""
    mask = full_mask(num_users, num_subcarriers)
    cols = _category_columns(num_subcarriers)
    for name in hidden:
        mask[:, cols[name]] = 0.0
    return mask


def random_mask(num_users: int, num_subcarriers: int, zeta: float,
                rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Mask observing ``round(zeta * total)`` uniformly chosen entries."""
    if not 0.0 <= zeta <= 1.0:
        raise ValueError("zeta must lie in [0, 1]")
    mask = full_mask(num_users, num_subcarriers).ravel()
    k = int(round(zeta * mask.size))
    hide = np.random.default_rng(rng).permutation(mask.size)[k:]
    mask[hide] = 0.0
    return mask.reshape(num_users - 1, -1)


def ipd(mask) -> float:
    """Observed fraction of the other agents' observation entries."""
    mask = np.asarray(mask)
    return float(np.count_nonzero(mask) / mask.size) if mask.size else 1.0


# --- actions and rewards ------------------------------------------------------------------

def discretize_pa_action(raw) -> np.ndarray:
    """Map actor outputs in (-1, 1) to {-1, 0, +1} with thresholds at +-1/3."""
    raw = np.asarray(raw, dtype=np.float64)
    return np.where(raw > 1.0 / 3.0, 1, np.where(raw < -1.0 / 3.0, -1, 0))


def apply_pa_action(v, action, step, assigned=None) -> np.ndarray:
    """``v + step * action``, negatives reset to 0, zero off the assignment.

    ``step`` may be an array broadcasting against ``v``.
    """
    out = np.asarray(v, dtype=np.float64) + step * np.asarray(action, dtype=np.float64)
    out = np.maximum(out, 0.0)
    if assigned is not None:
        out = out * (np.asarray(assigned) != 0)
    return out


def pa_internal_reward(scenario: Scenario, report: RateReport, agent: int,
                       penalty: float = -8.0, margin_weight: float = 3.0) -> float:
    """PDSC penalty over the agent's subcarriers plus its rate margin in bit/s/Hz."""
    mine = _occupied(report, agent)
    violated = not bool(report.pdsc_ok[mine, agent].all())
    margin = (report.user_totals[agent] - scenario.qos_min[agent]) / scenario.bandwidth
    return float(penalty * violated + margin_weight * margin)


def _occupied(report: RateReport, agent: int) -> np.ndarray:
    return report.extras["occupancy"][:, agent] != 0


def share_factors(report: RateReport, scenario: Scenario) -> np.ndarray:
    """Each agent's share of the weighted throughput; all zero if nothing is served."""
    theta = scenario.weights * report.user_totals
    total = theta.sum()
    return theta / total if total > 0 else np.zeros_like(theta)


def pa_joint_reward(report: RateReport, scenario: Scenario, agent: int,
                    scale: float = 16.0, rate: float = 0.45) -> float:
    """Agent's share of the exponentially shaped objective."""
    return float(share_factors(report, scenario)[agent]) * shaped_exp(
        scale, rate, report.objective_normalized)


def initial_indicator(assignment) -> np.ndarray:
    """Equal indicator 1 on every assigned slot."""
    return (np.asarray(assignment) != 0).astype(np.float64)


# --- networks ----------------------------------------------------------------------------

def cnn_canvas(n: int) -> int:
    """Smallest side ``10 + 4k >= n``: two valid 3x3 convolutions each followed by
    2x2 pooling then land on even sizes."""
    return 10 + 4 * max(0, -(-(n - 10) // 4))


def state_cnn_spec(num_users: int, num_subcarriers: int, cfg: PaNetConfig = PaNetConfig()) -> NetworkSpec:
    d = pa_state_dim(num_subcarriers)
    h, w = cnn_canvas(num_users - 1), cnn_canvas(d)
    c1, c2 = cfg.conv_channels
    k = cfg.kernel
    layers = [Conv(1, c1, k), MaxPool(2), Conv(c1, c2, k), MaxPool(2), Flatten()]
    spec = NetworkSpec((1, h, w), tuple(layers))
    width = spec.output_shape[0]
    fcs = []
    for _ in range(cfg.cnn_fc):
        fcs.append(FC(width, cfg.n_full))
        width = cfg.n_full
    fcs.append(FC(width, d, "sigmoid"))
    return NetworkSpec((1, h, w), tuple(layers + fcs))


def _trunk(n_in: int, groups, cfg: PaNetConfig, n_out: int, out_act: str) -> NetworkSpec:
    layers = []
    width = n_in
    if cfg.hierarchical:
        layers.append(Grouped(n_in, tuple(groups), cfg.group_units))
        width = cfg.group_units * len(groups)
    layers.append(FC(width, cfg.n_full))
    layers += [ResBlock(cfg.n_full) for _ in range(cfg.d_res)]
    layers.append(FC(cfg.n_full, cfg.penultimate))
    layers.append(FC(cfg.penultimate, n_out, out_act))
    return NetworkSpec((n_in,), tuple(layers))


def pa_actor_spec(num_subcarriers: int, cfg: PaNetConfig = PaNetConfig()) -> NetworkSpec:
    d = pa_state_dim(num_subcarriers)
    groups = [tuple(range(d)), tuple(range(d, 2 * d))]
    return _trunk(2 * d, groups, cfg, num_subcarriers, "tanh")


def pa_critic_spec(num_users: int, num_subcarriers: int, cfg: PaNetConfig = PaNetConfig()) -> NetworkSpec:
    d = pa_state_dim(num_subcarriers)
    n_in = 2 * d + num_users * num_subcarriers
    groups = [tuple(range(d)), tuple(range(d, 2 * d)), tuple(range(2 * d, n_in))]
    return _trunk(n_in, groups, cfg, 1, "identity")


def build_pa_agents(num_users: int, num_subcarriers: int, cfg: PaNetConfig = PaNetConfig(), *,
                    masks=None, actor_lr: float = 0.002, critic_lr: float = 0.005,
                    gamma: float = 0.99, tau: float = 0.01, seed: int = 0) -> MultiAgentCritic:
    rng = np.random.default_rng(seed)
    agents = []
    for _ in range(num_users):
        actor = Network(pa_actor_spec(num_subcarriers, cfg), rng)
        critic = Network(pa_critic_spec(num_users, num_subcarriers, cfg), rng)
        enc = Network(state_cnn_spec(num_users, num_subcarriers, cfg), rng) if num_users > 1 else None
        agents.append(ActorCritic(actor, critic, actor_lr, critic_lr, gamma, tau, encoder=enc))
    if masks is None:
        masks = [full_mask(num_users, num_subcarriers) for _ in range(num_users)]
    d = pa_state_dim(num_subcarriers)
    canvas = (cnn_canvas(num_users - 1), cnn_canvas(d)) if num_users > 1 else None
    return MultiAgentCritic(agents, masks, d, num_subcarriers, canvas)


# --- rollout -----------------------------------------------------------------------------

@dataclass
class PaStep:
    states: np.ndarray        # (M, d) self-states before the step
    actions: np.ndarray       # (M, N_F) raw actor outputs
    rewards: np.ndarray       # (M,) internal rewards
    next_states: np.ndarray
    done: bool
    report: RateReport


def _report(scenario: Scenario, assignment, powers) -> RateReport:
    rep = evaluate(scenario, assignment, powers)
    rep.extras["occupancy"] = np.asarray(assignment)
    return rep


def pa_rollout(scenario: Scenario, assignment, mac: MultiAgentCritic, steps: int,
               step_size: float, explore: bool = False, noise_std: float = 0.0,
               rng: np.random.Generator | None = None, indicator=None,
               penalty: float = -8.0, margin_weight: float = 3.0, resample_prob: float = 0.0):
    """Run ``steps`` synchronous power-adjustment steps of all agents.

    Every agent acts on the same snapshot of the indicator; the updates are
    merged afterwards. When exploring, raw outputs get Gaussian noise of
    ``noise_std`` and each entry is independently redrawn uniformly from
    ``[-1, 1]`` with probability ``resample_prob``. Returns
    ``(PowerAllocation, steps, final report)``.
    """
    occ = np.asarray(assignment)
    v = initial_indicator(occ) if indicator is None else np.asarray(indicator, dtype=np.float64)
    m = scenario.num_users
    history: list[PaStep] = []
    report = _report(scenario, occ, normalize_power(v, scenario.total_power))
    for t in range(steps):
        s = self_states(scenario, occ, v)
        raw = np.vstack([mac.act(s[None], k)[0] for k in range(m)])
        if explore:
            raw = perturb(raw, noise_std, resample_prob, rng, -1.0, 1.0)
        v = apply_pa_action(v, discretize_pa_action(raw).T, step_size, occ)
        report = _report(scenario, occ, normalize_power(v, scenario.total_power))
        rewards = np.array([pa_internal_reward(scenario, report, k, penalty, margin_weight)
                            for k in range(m)])
        s_next = self_states(scenario, occ, v)
        history.append(PaStep(s, raw, rewards, s_next, t == steps - 1, report))
    power = PowerAllocation.from_indicator(v, scenario.total_power)
    return power, history, report
