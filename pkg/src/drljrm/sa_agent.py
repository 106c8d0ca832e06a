"""Subcarrier-assignment agent: a single DDPG agent that assigns one user per
step, so a full assignment takes M steps.

The actor ends in one sigmoid layer whose first unit is the "A" output (how
many subcarriers the current user gets) and whose remaining ``N_F`` units
are the "B" scores (which subcarriers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ddpg import ActorCritic, Transition
from .features import gain_features, qos_features
from .nn import FC, Grouped, Network, NetworkSpec, ResBlock
from .noma import RateReport
from .scenario import Scenario

__all__ = [
    "SaNetConfig",
    "sa_state_dim",
    "encode_sa_state",
    "decode_sa_action",
    "sa_internal_reward",
    "sa_joint_reward",
    "shaped_exp",
    "user_order",
    "build_sa_agent",
    "sa_actor_spec",
    "sa_critic_spec",
    "sa_rollout",
    "SaStep",
    "perturb",
]

EXP_CAP = 50.0


@dataclass(frozen=True)
class SaNetConfig:
    n_full: int = 128
    d_res: int = 3
    penultimate: int = 64
    group_units: int = 16
    hierarchical: bool = True


def sa_state_dim(num_users: int, num_subcarriers: int) -> int:
    return 3 * num_users + 2 * num_subcarriers * num_users


def encode_sa_state(scenario: Scenario, occupancy, user: int) -> np.ndarray:
    """Flatten ``[weights, qos, gains, occupancy, one-hot(user)]``.

    The gain and occupancy blocks are user-major, so each user's ``N_F``
    entries are contiguous.
    """
    m = scenario.num_users
    if not 0 <= user < m:
        raise IndexError(f"user {user} out of range")
    onehot = np.zeros(m)
    onehot[user] = 1.0
    occ = np.asarray(occupancy, dtype=np.float64)
    return np.concatenate([
        scenario.weights,
        qos_features(scenario),
        gain_features(scenario).T.ravel(),
        occ.T.ravel(),
        onehot,
    ])


def _user_groups(num_users: int, num_subcarriers: int) -> list[tuple[int, ...]]:
    """State indices belonging to each user, in the layout of :func:`encode_sa_state`."""
    m, n = num_users, num_subcarriers
    groups = []
    for u in range(m):
        idx = [u, m + u]
        idx += list(range(2 * m + u * n, 2 * m + (u + 1) * n))
        idx += list(range(2 * m + m * n + u * n, 2 * m + m * n + (u + 1) * n))
        idx.append(2 * m + 2 * m * n + u)
        groups.append(tuple(idx))
    return groups


def _trunk(n_in: int, groups, cfg: SaNetConfig, n_out: int, out_act: str) -> NetworkSpec:
    layers = []
    width = n_in
    if cfg.hierarchical and groups:
        layers.append(Grouped(n_in, tuple(groups), cfg.group_units))
        width = cfg.group_units * len(groups)
    layers.append(FC(width, cfg.n_full))
    layers += [ResBlock(cfg.n_full) for _ in range(cfg.d_res)]
    layers.append(FC(cfg.n_full, cfg.penultimate))
    layers.append(FC(cfg.penultimate, n_out, out_act))
    return NetworkSpec((n_in,), tuple(layers))


def sa_actor_spec(num_users: int, num_subcarriers: int, cfg: SaNetConfig = SaNetConfig()) -> NetworkSpec:
    d = sa_state_dim(num_users, num_subcarriers)
    return _trunk(d, _user_groups(num_users, num_subcarriers), cfg, num_subcarriers + 1, "sigmoid")


def sa_critic_spec(num_users: int, num_subcarriers: int, cfg: SaNetConfig = SaNetConfig()) -> NetworkSpec:
    d = sa_state_dim(num_users, num_subcarriers)
    groups = _user_groups(num_users, num_subcarriers)
    groups.append(tuple(range(d, d + num_subcarriers + 1)))
    return _trunk(d + num_subcarriers + 1, groups, cfg, 1, "identity")


def build_sa_agent(num_users: int, num_subcarriers: int, cfg: SaNetConfig = SaNetConfig(), *,
                   actor_lr: float = 0.001, critic_lr: float = 0.003, gamma: float = 0.99,
                   tau: float = 0.01, seed: int = 0) -> ActorCritic:
    rng = np.random.default_rng(seed)
    actor = Network(sa_actor_spec(num_users, num_subcarriers, cfg), rng)
    critic = Network(sa_critic_spec(num_users, num_subcarriers, cfg), rng)
    return ActorCritic(actor, critic, actor_lr, critic_lr, gamma, tau)


def decode_sa_action(a_out: float, b_out) -> np.ndarray:
    """Binary subcarrier vector from the A output and the B scores.

    ``k = clamp(round(a_out * N_F), 1, N_F)`` (halves round up) subcarriers
    with the highest B scores are granted; ties go to the lower index.
    """
    b = np.asarray(b_out, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise ValueError("b_out must be finite")
    n = b.size
    k = min(max(int(math.floor(float(a_out) * n + 0.5)), 1), n)
    chosen = np.argsort(-b, kind="stable")[:k]
    out = np.zeros(n, dtype=np.int64)
    out[chosen] = 1
    return out


def sa_internal_reward(occupancy, scenario: Scenario, penalty: float = -5.0) -> float:
    """``penalty`` if any subcarrier carries more than ``N_max`` users, else 0."""
    occ = np.asarray(occupancy)
    return penalty if np.any(occ.sum(axis=1) > scenario.max_per_subcarrier) else 0.0


def shaped_exp(scale: float, rate: float, objective_normalized: float) -> float:
    """``scale * exp(rate * objective)`` with the exponent capped at ``EXP_CAP``."""
    return scale * math.exp(min(rate * objective_normalized, EXP_CAP))


def sa_joint_reward(report: RateReport, scale: float = 1.5, rate: float = 0.25) -> float:
    """Exponentially shaped objective (objective taken in bit/s/Hz)."""
    return shaped_exp(scale, rate, report.objective_normalized)


def user_order(scenario: Scenario) -> list[int]:
    """Descending weight, lower index first on ties."""
    return sorted(range(scenario.num_users), key=lambda u: (-scenario.weights[u], u))


def perturb(raw: np.ndarray, noise_std: float, resample_prob: float,
            rng: np.random.Generator, low: float, high: float) -> np.ndarray:
    """Exploration: Gaussian noise, then each entry redrawn uniformly on
    ``[low, high]`` with probability ``resample_prob``; clipped to the range."""
    out = raw
    if noise_std > 0:
        out = out + rng.normal(0.0, noise_std, size=raw.shape)
    if resample_prob > 0:
        redraw = rng.random(raw.shape) < resample_prob
        out = np.where(redraw, rng.uniform(low, high, size=raw.shape), out)
    return np.clip(out, low, high)


@dataclass
class SaStep:
    transition: Transition
    internal_reward: float


def sa_rollout(scenario: Scenario, agent: ActorCritic, explore: bool = False,
               noise_std: float = 0.0, rng: np.random.Generator | None = None,
               penalty: float = -5.0, resample_prob: float = 0.0):
    """Assign every user once, in :func:`user_order`.

    Returns ``(occupancy, steps)``; each step's transition carries only the
    internal reward, joint rewards are added by the caller.
    """
    n_f, m = scenario.gains.shape
    occ = np.zeros((n_f, m), dtype=np.int64)
    order = user_order(scenario)
    steps: list[SaStep] = []
    for t, user in enumerate(order):
        state = encode_sa_state(scenario, occ, user)
        raw = agent.actor.forward(state[None])[0]
        if explore:
            raw = perturb(raw, noise_std, resample_prob, rng, 0.0, 1.0)
        occ[:, user] = decode_sa_action(raw[0], raw[1:])
        r_int = sa_internal_reward(occ, scenario, penalty)
        last = t == m - 1
        nxt = encode_sa_state(scenario, occ, order[t + 1] if not last else user)
        steps.append(SaStep(Transition(state, raw, r_int, nxt, last), r_int))
    return occ, steps
