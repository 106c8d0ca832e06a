"""DDPG building blocks: replay buffers, actor-critic pairs with target copies,
single-agent updates and centralized-critic multi-agent updates.

Critics take the concatenation ``[state, action]`` as input. In the
multi-agent case agent ``m``'s critic sees
``[own state, compressed others, a_1, ..., a_M]``; the others' states are
compressed by a per-agent encoder network (a small CNN) whose parameters are
trained through agent ``m``'s critic loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .nn import Network, NonFiniteError, RMSProp, soft_update

__all__ = [
    "Transition",
    "Batch",
    "ReplayBuffer",
    "ActorCritic",
    "critic_update",
    "actor_update",
    "JointBatch",
    "MultiAgentCritic",
    "ma_critic_update",
    "ma_actor_update",
    "ma_update",
    "target_actions",
    "NoiseSchedule",
]


class Transition(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool = False


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return len(self.rewards)


class ReplayBuffer:
    """Fixed-capacity ring buffer; the oldest record is overwritten first."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int,
                 reward_dim: int | None = None):
        """``reward_dim`` set stores one reward per agent instead of a scalar."""
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity if reward_dim is None else (capacity, reward_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.dones = np.zeros(capacity, dtype=bool)
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    @property
    def full(self) -> bool:
        return self.inserted >= self.capacity

    def store(self, t: Transition) -> None:
        if not np.all(np.isfinite(t.reward)):
            raise NonFiniteError("reward must be finite")
        k = self.inserted % self.capacity
        self.states[k] = t.state
        self.actions[k] = t.action
        self.rewards[k] = t.reward
        self.next_states[k] = t.next_state
        self.dones[k] = t.done
        self.inserted += 1

    def add_reward(self, positions: Sequence[int], amount) -> None:
        """Add ``amount`` to already-stored records, given their insertion counters."""
        for n in positions:
            if n < self.inserted - self.capacity:
                continue  # already overwritten
            self.rewards[n % self.capacity] += amount

    def sample(self, batch: int, rng: np.random.Generator | int | None = None) -> Batch:
        """Uniform sample without replacement."""
        size = len(self)
        if batch > size:
            raise ValueError(f"cannot sample {batch} from a buffer holding {size}")
        idx = np.random.default_rng(rng).choice(size, size=batch, replace=False)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.dones[idx])

    def contents(self) -> Batch:
        idx = np.arange(len(self))
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx],
                     self.next_states[idx], self.dones[idx])


@dataclass
class ActorCritic:
    """Online/target actor and critic with their optimizers.

    ``encoder`` is only used by the multi-agent critic.
    """

    actor: Network
    critic: Network
    actor_lr: float
    critic_lr: float
    gamma: float = 0.99
    tau: float = 0.01
    encoder: Network | None = None
    actor_target: Network = field(init=False)
    critic_target: Network = field(init=False)
    encoder_target: Network | None = field(init=False, default=None)

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = RMSProp(self.actor.params, self.actor_lr)
        self.critic_opt = RMSProp(self.critic.params, self.critic_lr)
        if self.encoder is not None:
            self.encoder_target = self.encoder.copy()
            self.encoder_opt = RMSProp(self.encoder.params, self.critic_lr)

    def soft_update(self) -> None:
        soft_update(self.actor_target, self.actor, self.tau)
        soft_update(self.critic_target, self.critic, self.tau)
        if self.encoder is not None:
            soft_update(self.encoder_target, self.encoder, self.tau)

    def networks(self, prefix: str = "") -> dict[str, Network]:
        nets = {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}
        if self.encoder is not None:
            nets["encoder"] = self.encoder
            nets["encoder_target"] = self.encoder_target
        return {prefix + k: v for k, v in nets.items()}

    def optimizers(self, prefix: str = "") -> dict[str, RMSProp]:
        opts = {"actor_opt": self.actor_opt, "critic_opt": self.critic_opt}
        if self.encoder is not None:
            opts["encoder_opt"] = self.encoder_opt
        return {prefix + k: v for k, v in opts.items()}


def _td_step(critic: Network, opt: RMSProp, inputs: np.ndarray, targets: np.ndarray):
    """One squared-TD-error step; returns (pre-step loss, dL/d(input))."""
    q = critic.forward(inputs)[:, 0]
    err = q - targets
    loss = float(np.mean(err**2))
    if not np.isfinite(loss):
        raise NonFiniteError("critic loss is not finite")
    critic.zero_grad()
    dx = critic.backward((2.0 * err / len(err))[:, None])
    opt.step()
    return loss, dx


def critic_update(ac: ActorCritic, batch: Batch) -> float:
    """Regress Q(s, a) on ``r + gamma * Q'(s', mu'(s'))``; returns the pre-step loss."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    next_a = ac.actor_target.forward(batch.next_states)
    next_q = ac.critic_target.forward(np.hstack([batch.next_states, next_a]))[:, 0]
    y = batch.rewards + ac.gamma * (1.0 - np.asarray(batch.dones, dtype=np.float64)) * next_q
    loss, _ = _td_step(ac.critic, ac.critic_opt, np.hstack([batch.states, batch.actions]), y)
    return loss


def _ascend_actor(actor: Network, opt: RMSProp, dq_da: np.ndarray) -> float:
    """Apply dJ/da (already averaged over the batch) through the actor; returns grad norm."""
    actor.zero_grad()
    actor.backward(-dq_da)  # minimise -J
    norm = float(np.sqrt(sum(np.sum(p.grad**2) for p in actor.params)))
    if not np.isfinite(norm):
        raise NonFiniteError("actor gradient is not finite")
    opt.step()
    return norm


def actor_update(ac: ActorCritic, batch: Batch) -> float:
    """One deterministic-policy-gradient ascent step on E[Q(s, mu(s))]."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    s = batch.states
    a = ac.actor.forward(s)
    ac.critic.forward(np.hstack([s, a]))
    dx = ac.critic.backward(np.full((len(s), 1), 1.0 / len(s)))
    ac.critic.zero_grad()
    return _ascend_actor(ac.actor, ac.actor_opt, dx[:, s.shape[1]:])


# --- multi-agent -----------------------------------------------------------------------

class JointBatch(NamedTuple):
    """All agents' self-states ``(B, M, d)`` and actions ``(B, M, n_a)``, one agent's rewards."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return len(self.rewards)

    def for_agent(self, m: int) -> "JointBatch":
        """Same batch with only agent ``m``'s column of per-agent rewards."""
        if np.ndim(self.rewards) == 1:
            return self
        return JointBatch(self.states, self.actions, self.rewards[:, m], self.next_states, self.dones)

    @classmethod
    def from_flat(cls, batch: Batch, num_agents: int) -> "JointBatch":
        b = len(batch)
        return cls(batch.states.reshape(b, num_agents, -1),
                   batch.actions.reshape(b, num_agents, -1),
                   batch.rewards, batch.next_states.reshape(b, num_agents, -1), batch.dones)


class MultiAgentCritic:
    """Per-agent actor-critics plus the others-state view each agent perceives.

    ``masks[m]`` is an ``(M-1, d)`` 0/1 matrix selecting which entries of the
    other agents' self-states agent ``m`` can observe. ``canvas`` is the
    zero-padded image size fed to the encoders.
    """

    def __init__(self, agents: list[ActorCritic], masks: list[np.ndarray], state_dim: int,
                 action_dim: int, canvas: tuple[int, int] | None):
        self.agents = agents
        self.masks = [np.asarray(mk, dtype=np.float64) for mk in masks]
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.canvas = canvas
        m = len(agents)
        for k, ac in enumerate(agents):
            width = ac.critic.spec.input_shape[0]
            if width != 2 * state_dim + m * action_dim:
                raise ValueError(f"agent {k} critic input width {width} != "
                                 f"{2 * state_dim + m * action_dim}")

    @property
    def num_agents(self) -> int:
        return len(self.agents)

    def others_image(self, states: np.ndarray, m: int) -> np.ndarray:
        """Masked others-matrix of agent ``m`` padded to the encoder canvas, ``(B, 1, H, W)``."""
        others = np.delete(states, m, axis=1) * self.masks[m][None]
        b, rows, cols = others.shape
        img = np.zeros((b, 1) + tuple(self.canvas))
        img[:, 0, :rows, :cols] = others
        return img

    def compressed(self, states: np.ndarray, m: int, target: bool = False) -> np.ndarray:
        if self.num_agents == 1:
            return np.zeros((states.shape[0], self.state_dim))
        ac = self.agents[m]
        enc = ac.encoder_target if target else ac.encoder
        return enc.forward(self.others_image(states, m))

    def policy_input(self, states: np.ndarray, m: int, target: bool = False) -> np.ndarray:
        return np.hstack([states[:, m], self.compressed(states, m, target)])

    def act(self, states: np.ndarray, m: int, target: bool = False) -> np.ndarray:
        ac = self.agents[m]
        actor = ac.actor_target if target else ac.actor
        return actor.forward(self.policy_input(states, m, target))

    def soft_update(self) -> None:
        for ac in self.agents:
            ac.soft_update()


def target_actions(mac: MultiAgentCritic, next_states: np.ndarray) -> np.ndarray:
    """All target actors' actions at ``next_states``, concatenated agent-major."""
    return np.hstack([mac.act(next_states, k, target=True) for k in range(mac.num_agents)])


def ma_critic_update(mac: MultiAgentCritic, m: int, batch: JointBatch,
                     next_actions: np.ndarray | None = None) -> float:
    """TD step for agent ``m``'s centralized critic; the encoder is trained too.

    Targets use every agent's target actor at the next state (pass
    ``next_actions`` to reuse them across agents), with actions of the
    current state taken from the batch.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    ac = mac.agents[m]
    b = len(batch)
    if next_actions is None:
        next_actions = target_actions(mac, batch.next_states)
    next_in = np.hstack([mac.policy_input(batch.next_states, m, target=True), next_actions])
    alive = 1.0 - np.asarray(batch.dones, dtype=np.float64)
    y = batch.rewards + ac.gamma * alive * ac.critic_target.forward(next_in)[:, 0]

    info = mac.compressed(batch.states, m)
    inputs = np.hstack([batch.states[:, m], info, batch.actions.reshape(b, -1)])
    loss, dx = _td_step(ac.critic, ac.critic_opt, inputs, y)
    if ac.encoder is not None and mac.num_agents > 1:
        d = mac.state_dim
        ac.encoder.zero_grad()
        ac.encoder.backward(dx[:, d:2 * d])
        ac.encoder_opt.step()
    return loss


def ma_actor_update(mac: MultiAgentCritic, m: int, batch: JointBatch) -> float:
    """Policy-gradient step for agent ``m`` through its own action slot only."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    ac = mac.agents[m]
    b = len(batch)
    x = mac.policy_input(batch.states, m)
    a_m = ac.actor.forward(x)
    actions = batch.actions.copy()
    actions[:, m] = a_m
    ac.critic.forward(np.hstack([x, actions.reshape(b, -1)]))
    dx = ac.critic.backward(np.full((b, 1), 1.0 / b))
    ac.critic.zero_grad()
    start = 2 * mac.state_dim + m * mac.action_dim
    return _ascend_actor(ac.actor, ac.actor_opt, dx[:, start:start + mac.action_dim])


def ma_update(mac: MultiAgentCritic, batch: JointBatch) -> tuple[np.ndarray, np.ndarray]:
    """One multi-agent training round: every agent's critic and actor step, then soft updates.

    All agents learn from the same sampled batch and the same target actions;
    targets move only after every agent has stepped, so the result does not
    depend on the order agents are visited in. Returns per-agent
    ``(critic losses, actor gradient norms)``.
    """
    next_actions = target_actions(mac, batch.next_states)
    losses = np.empty(mac.num_agents)
    norms = np.empty(mac.num_agents)
    for m in range(mac.num_agents):
        own = batch.for_agent(m)
        losses[m] = ma_critic_update(mac, m, own, next_actions)
        norms[m] = ma_actor_update(mac, m, own)
    mac.soft_update()
    return losses, norms


@dataclass
class NoiseSchedule:
    """Zero-mean Gaussian exploration noise with linearly annealed std."""

    start: float = 0.3
    end: float = 0.02
    steps: int = 1000

    def std(self, t: int) -> float:
        frac = min(max(t, 0) / max(self.steps, 1), 1.0)
        return self.start + (self.end - self.start) * frac
