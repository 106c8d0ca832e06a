"""Alternating SA/PA training of the joint resource-management agents.

One epoch:

1. the SA agent assigns subcarriers; if the result is unsuitable (C4 or C6
   fails) the SA inner loop retrains it on internal rewards until it produces
   a suitable assignment or ``sa_inner_max`` episodes pass, and the epoch ends;
2. otherwise the PA agents run ``pa_steps`` synchronous power steps; if the
   final powers are unsuitable (C2 or C5 fails) the PA inner loop does the
   same on the PA side, and the epoch ends;
3. otherwise the objective is evaluated, joint rewards are added to both
   modules' transitions, the transitions are stored and each module updates
   once its replay buffer is full.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ddpg import (
    ActorCritic,
    JointBatch,
    MultiAgentCritic,
    NoiseSchedule,
    ReplayBuffer,
    Transition,
    actor_update,
    critic_update,
    ma_update,
)
from .nn import NonFiniteError, checkpoint_extras, load_checkpoint, mac_counter, save_checkpoint
from .noma import PowerAllocation, RateReport, evaluate, normalize_power
from .pa_agents import (
    PaNetConfig,
    build_pa_agents,
    full_mask,
    initial_indicator,
    pa_joint_reward,
    pa_rollout,
    pa_state_dim,
    random_mask,
    self_states,
    state_cnn_spec,
)
from .sa_agent import (
    SaNetConfig,
    build_sa_agent,
    encode_sa_state,
    sa_joint_reward,
    sa_rollout,
    sa_state_dim,
)
from .scenario import ConfigError, Scenario

__all__ = [
    "TrainConfig",
    "train_config_from_dict",
    "Agents",
    "Incumbent",
    "TrainLog",
    "TrainingDiverged",
    "build_agents",
    "train",
    "PolicyReport",
    "evaluate_policy",
    "policy_solution",
    "greedy_solution",
    "ComplexityAudit",
    "complexity_audit",
    "predicted_sa_macs",
    "predicted_pa_macs",
    "ssar",
    "spar",
]

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """A non-finite loss, gradient or activation stopped training."""

    def __init__(self, epoch: int, cause: Exception, checkpoint: Path | None, log_: "TrainLog"):
        super().__init__(f"training diverged at epoch {epoch}: {cause}")
        self.epoch = epoch
        self.checkpoint = checkpoint
        self.log = log_


@dataclass(frozen=True)
class TrainConfig:
    """Training hyper-parameters. Defaults are the desk-scale preset."""

    epochs: int = 2000
    sa_inner_max: int = 200
    pa_inner_max: int = 200
    pa_steps: int = 30
    pa_step_size: float = 1e-2

    sa_actor_lr: float = 0.001
    sa_critic_lr: float = 0.003
    pa_actor_lr: float = 0.002
    pa_critic_lr: float = 0.005
    sa_buffer: int = 5000
    pa_buffer: int = 4000
    batch_size: int = 128
    gamma: float = 0.99
    tau: float = 0.01
    # gradient rounds per stored rollout once a buffer is full
    sa_updates: int = 1
    pa_updates: int = 1

    sa_internal_penalty: float = -5.0
    pa_internal_penalty: float = -8.0
    pa_internal_margin: float = 3.0
    sa_joint_scale: float = 1.5
    sa_joint_rate: float = 0.25
    pa_joint_scale: float = 16.0
    pa_joint_rate: float = 0.45
    broadcast_joint: bool = True

    noise_start: float = 0.3
    noise_end: float = 0.02
    # probability of redrawing an action entry uniformly, annealed alongside
    resample_start: float = 0.0
    resample_end: float = 0.0
    noise_epochs: int = 1500
    ipd: float = 1.0

    sa_net: SaNetConfig = SaNetConfig()
    pa_net: PaNetConfig = PaNetConfig()
    seed: int = 0
    checkpoint_every: int = 100

    def validate(self) -> None:
        for name in ("epochs", "sa_inner_max", "pa_inner_max", "sa_buffer", "pa_buffer",
                     "batch_size", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("pa_steps", "sa_updates", "pa_updates", "noise_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("sa_actor_lr", "sa_critic_lr", "pa_actor_lr", "pa_critic_lr", "pa_step_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        for name in ("resample_start", "resample_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.ipd <= 1.0:
            raise ValueError("ipd must lie in [0, 1]")
        if self.batch_size > min(self.sa_buffer, self.pa_buffer):
            raise ValueError("batch_size exceeds a buffer capacity")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        """JSON-ready dictionary; inverse of :meth:`from_dict`."""
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        kw = dict(values)
        if "sa_net" in kw:
            kw["sa_net"] = SaNetConfig(**kw["sa_net"])
        if "pa_net" in kw:
            net = dict(kw["pa_net"])
            net["conv_channels"] = tuple(net.get("conv_channels", PaNetConfig().conv_channels))
            kw["pa_net"] = PaNetConfig(**net)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def desk(cls, **changes) -> "TrainConfig":
        """Desk-scale preset tuned for single-instance training at M=4, N_F=3.

        Differs from the defaults in smaller replay buffers and batches, lower
        PA learning rates and uniform-resampling exploration; see the
        project notes for the measurements behind each value.
        """
        base = cls(sa_buffer=512, pa_buffer=1024, batch_size=64,
                   pa_actor_lr=3e-4, pa_critic_lr=5e-4,
                   noise_start=0.2, noise_end=0.02, resample_start=0.3, resample_end=0.0,
                   pa_inner_max=3)
        return base.replace(**changes)

    @classmethod
    def full_scale(cls, **changes) -> "TrainConfig":
        """Full-scale counts and step size from the original experiments."""
        base = cls(epochs=15000, sa_inner_max=20000, pa_inner_max=35000, pa_steps=100,
                   pa_step_size=1e-5, noise_epochs=12000)
        return base.replace(**changes)


TRAIN_PREFIX = "train_"


def train_config_from_dict(values: dict, base: TrainConfig | None = None) -> TrainConfig:
    """Apply the ``train_<field>`` keys of a parsed config file to ``base`` (desk preset).

    Only scalar fields can be set this way; unknown fields raise ``ConfigError``.
    """
    cfg = base if base is not None else TrainConfig.desk()
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    changes = {}
    for key, value in values.items():
        if not key.startswith(TRAIN_PREFIX):
            continue
        name = key[len(TRAIN_PREFIX):]
        if name not in fields or name in ("sa_net", "pa_net"):
            raise ConfigError(f"unknown training field {key}")
        current = getattr(cfg, name)
        try:
            if isinstance(current, bool):
                if not isinstance(value, bool):
                    raise TypeError(value)
                changes[name] = value
            else:
                changes[name] = type(current)(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: cannot convert {value!r}") from exc
    cfg = cfg.replace(**changes)
    try:
        cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# --- agents ------------------------------------------------------------------------------

@dataclass
class Incumbent:
    """Best feasible joint solution met during training."""

    objective: float          # bit/s/Hz
    assignment: np.ndarray
    powers: np.ndarray


@dataclass
class Agents:
    sa: ActorCritic
    pa: MultiAgentCritic
    incumbent: Incumbent | None = None

    def offer(self, assignment, powers, report: RateReport) -> bool:
        """Keep ``(assignment, powers)`` if feasible and strictly better; returns whether kept."""
        obj = report.objective_normalized
        if not report.feasible or (self.incumbent is not None and obj <= self.incumbent.objective):
            return False
        self.incumbent = Incumbent(obj, np.array(assignment, dtype=np.int64),
                                   np.array(powers, dtype=np.float64))
        return True

    def networks(self) -> dict:
        nets = self.sa.networks("sa/")
        for m, ac in enumerate(self.pa.agents):
            nets.update(ac.networks(f"pa{m}/"))
        return nets

    def optimizers(self) -> dict:
        opts = self.sa.optimizers("sa/")
        for m, ac in enumerate(self.pa.agents):
            opts.update(ac.optimizers(f"pa{m}/"))
        return opts

    def save(self, path, metadata: dict | None = None) -> None:
        extras = {}
        if self.incumbent is not None:
            extras = {"incumbent/objective": np.array(self.incumbent.objective),
                      "incumbent/assignment": self.incumbent.assignment,
                      "incumbent/powers": self.incumbent.powers}
        save_checkpoint(path, self.networks(), self.optimizers(), extras, metadata)

    def load(self, path) -> None:
        load_checkpoint(path, self.networks(), self.optimizers())
        _, extras = checkpoint_extras(path)
        if "incumbent/objective" in extras:
            self.incumbent = Incumbent(float(extras["incumbent/objective"]),
                                       extras["incumbent/assignment"].astype(np.int64),
                                       extras["incumbent/powers"].astype(np.float64))
        else:
            self.incumbent = None

    def snapshot(self) -> dict:
        return {k: net.get_flat() for k, net in self.networks().items()}

    def restore(self, snap: dict) -> None:
        for k, net in self.networks().items():
            net.set_flat(snap[k])


def build_agents(num_users: int, num_subcarriers: int, config: TrainConfig = TrainConfig()) -> Agents:
    ss = np.random.SeedSequence(config.seed)
    sa_seed, pa_seed, mask_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    sa = build_sa_agent(num_users, num_subcarriers, config.sa_net,
                        actor_lr=config.sa_actor_lr, critic_lr=config.sa_critic_lr,
                        gamma=config.gamma, tau=config.tau, seed=sa_seed)
    if config.ipd >= 1.0:
        masks = [full_mask(num_users, num_subcarriers) for _ in range(num_users)]
    else:
        rng = np.random.default_rng(mask_seed)
        masks = [random_mask(num_users, num_subcarriers, config.ipd, rng) for _ in range(num_users)]
    pa = build_pa_agents(num_users, num_subcarriers, config.pa_net, masks=masks,
                         actor_lr=config.pa_actor_lr, critic_lr=config.pa_critic_lr,
                         gamma=config.gamma, tau=config.tau, seed=pa_seed)
    return Agents(sa, pa)


# --- suitability gates -------------------------------------------------------------------

def ssar(scenario: Scenario, assignment) -> bool:
    """Suitable SA result: C4 and C6."""
    occ = np.asarray(assignment)
    binary = bool(np.all((occ == 0) | (occ == 1)))
    return binary and bool(np.all(occ.sum(axis=1) <= scenario.max_per_subcarrier))


def spar(report: RateReport) -> bool:
    """Suitable PA result: C2 and C5 (C1 and C3 hold by construction)."""
    return report.flags["C2"] and report.flags["C5"]


# --- log ---------------------------------------------------------------------------------

LOG_FIELDS = ("epoch", "branch", "objective", "feasible", "sa_inner_episodes",
              "pa_inner_episodes", "sa_critic_loss", "pa_critic_loss", "sa_updates",
              "pa_updates", "c4_violations", "c2_violations", "c5_violations",
              "macs_forward", "macs_backward", "wall_time")
# columns that must reproduce exactly under fixed seeds
DETERMINISTIC_FIELDS = LOG_FIELDS[:-1]


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    pa_losses: list = field(default_factory=list)  # per-agent critic losses per epoch

    def append(self, row: dict, pa_losses=None) -> None:
        if self.rows and row["epoch"] <= self.rows[-1]["epoch"]:
            raise ValueError("epochs must increase")
        self.rows.append(row)
        self.pa_losses.append(None if pa_losses is None else list(pa_losses))

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def deterministic_view(self) -> list[tuple]:
        return [tuple(r[k] for k in DETERMINISTIC_FIELDS) for r in self.rows]

    def to_csv(self, path) -> None:
        m = max((len(p) for p in self.pa_losses if p is not None), default=0)
        extra = [f"pa{k}_critic_loss" for k in range(m)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(LOG_FIELDS) + extra)
            for row, pl in zip(self.rows, self.pa_losses):
                pl = pl if pl is not None else [math.nan] * m
                w.writerow([_fmt(row[k]) for k in LOG_FIELDS] + [_fmt(x) for x in pl])


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


# --- training ----------------------------------------------------------------------------

class _Trainer:
    def __init__(self, scenario: Scenario, config: TrainConfig, agents: Agents | None,
                 checkpoint: Path | None):
        config.validate()
        self.sc = scenario
        self.cfg = config
        m, n_f = scenario.num_users, scenario.num_subcarriers
        self.agents = agents or build_agents(m, n_f, config)
        self.rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(4)[3])
        self.sa_buf = ReplayBuffer(config.sa_buffer, sa_state_dim(m, n_f), n_f + 1)
        d = pa_state_dim(n_f)
        self.pa_buf = ReplayBuffer(config.pa_buffer, m * d, m * n_f, reward_dim=m)
        self.noise = NoiseSchedule(config.noise_start, config.noise_end, config.noise_epochs)
        self.resample = NoiseSchedule(config.resample_start, config.resample_end,
                                      config.noise_epochs)
        self.checkpoint = checkpoint
        self.log = TrainLog()
        self._reset_counters()

    def _reset_counters(self):
        self.sa_losses: list[float] = []
        self.pa_loss_rows: list[np.ndarray] = []
        self.violations = {"C4": 0, "C2": 0, "C5": 0}

    # storage -------------------------------------------------------------------

    def _store_sa(self, steps, joint: float = 0.0) -> None:
        last = len(steps) - 1
        for t, st in enumerate(steps):
            tr = st.transition
            bonus = joint if (self.cfg.broadcast_joint or t == last) else 0.0
            self.sa_buf.store(tr._replace(reward=tr.reward + bonus))

    def _store_pa(self, history, joint=None) -> None:
        last = len(history) - 1
        for t, h in enumerate(history):
            r = h.rewards.copy()
            if joint is not None and (self.cfg.broadcast_joint or t == last):
                r = r + joint
            self.pa_buf.store(Transition(h.states.ravel(), h.actions.ravel(), r,
                                         h.next_states.ravel(), h.done))

    # updates --------------------------------------------------------------------

    def _update_sa(self) -> None:
        if not self.sa_buf.full:
            return
        for _ in range(self.cfg.sa_updates):
            batch = self.sa_buf.sample(self.cfg.batch_size, self.rng)
            self.sa_losses.append(critic_update(self.agents.sa, batch))
            actor_update(self.agents.sa, batch)
            self.agents.sa.soft_update()

    def _update_pa(self) -> None:
        if not self.pa_buf.full:
            return
        for _ in range(self.cfg.pa_updates):
            batch = JointBatch.from_flat(self.pa_buf.sample(self.cfg.batch_size, self.rng),
                                         self.sc.num_users)
            losses, _ = ma_update(self.agents.pa, batch)
            self.pa_loss_rows.append(losses)

    # rollouts ------------------------------------------------------------------

    def _sa(self, std):
        std, prob = std
        return sa_rollout(self.sc, self.agents.sa, explore=True, noise_std=std, rng=self.rng,
                          penalty=self.cfg.sa_internal_penalty, resample_prob=prob)

    def _pa(self, occ, std):
        std, prob = std
        return pa_rollout(self.sc, occ, self.agents.pa, self.cfg.pa_steps, self.cfg.pa_step_size,
                          explore=True, noise_std=std, rng=self.rng,
                          penalty=self.cfg.pa_internal_penalty,
                          margin_weight=self.cfg.pa_internal_margin, resample_prob=prob)

    def _count(self, occ=None, report=None):
        if occ is not None and not ssar(self.sc, occ):
            self.violations["C4"] += 1
        if report is not None:
            self.violations["C2"] += not report.flags["C2"]
            self.violations["C5"] += not report.flags["C5"]

    def _final_report(self, occ, history) -> RateReport:
        if history:
            return history[-1].report
        return evaluate(self.sc, occ, normalize_power(initial_indicator(occ), self.sc.total_power))

    # epoch ---------------------------------------------------------------------

    def epoch(self, e: int) -> dict:
        self._reset_counters()
        std = (self.noise.std(e), self.resample.std(e))
        row = {"epoch": e, "objective": math.nan, "feasible": False,
               "sa_inner_episodes": 0, "pa_inner_episodes": 0}

        occ, sa_steps = self._sa(std)
        self._count(occ=occ)
        if not ssar(self.sc, occ):
            n = 0
            while n < self.cfg.sa_inner_max:
                self._store_sa(sa_steps)
                self._update_sa()
                n += 1
                if ssar(self.sc, occ):
                    break
                occ, sa_steps = self._sa(std)
                self._count(occ=occ)
            row.update(branch="sa_inner", sa_inner_episodes=n)
            return row

        power, history, _ = self._pa(occ, std)
        report = self._final_report(occ, history)
        self._count(report=report)
        if not spar(report):
            n = 0
            while n < self.cfg.pa_inner_max:
                if history:
                    self._store_pa(history)
                    self._update_pa()
                n += 1
                if spar(report):
                    break
                power, history, _ = self._pa(occ, std)
                report = self._final_report(occ, history)
                self._count(report=report)
                self.agents.offer(occ, power.powers, report)
            row.update(branch="pa_inner", pa_inner_episodes=n)
            return row

        # suitable SA and PA results: joint rewards
        assert ssar(self.sc, occ)
        sa_joint = sa_joint_reward(report, self.cfg.sa_joint_scale, self.cfg.sa_joint_rate)
        pa_joint = np.array([pa_joint_reward(report, self.sc, k, self.cfg.pa_joint_scale,
                                             self.cfg.pa_joint_rate)
                             for k in range(self.sc.num_users)])
        self.agents.offer(occ, power.powers, report)
        self._store_sa(sa_steps, sa_joint)
        if history:
            self._store_pa(history, pa_joint)
        self._update_sa()
        self._update_pa()
        row.update(branch="joint", objective=report.objective_normalized,
                   feasible=report.feasible)
        return row

    # driver --------------------------------------------------------------------

    def run(self) -> tuple[Agents, TrainLog]:
        good = self.agents.snapshot()
        for e in range(self.cfg.epochs):
            t0 = time.perf_counter()
            try:
                with mac_counter() as macs:
                    row = self.epoch(e)
            except (NonFiniteError, FloatingPointError) as exc:
                self.agents.restore(good)
                path = None
                if self.checkpoint is not None:
                    path = Path(self.checkpoint)
                    self.agents.save(path)
                raise TrainingDiverged(e, exc, path, self.log) from exc
            pa_mean = (np.mean(self.pa_loss_rows, axis=0) if self.pa_loss_rows else None)
            row.update(
                sa_critic_loss=float(np.mean(self.sa_losses)) if self.sa_losses else math.nan,
                pa_critic_loss=float(np.mean(pa_mean)) if pa_mean is not None else math.nan,
                sa_updates=len(self.sa_losses),
                pa_updates=len(self.pa_loss_rows),
                c4_violations=self.violations["C4"],
                c2_violations=self.violations["C2"],
                c5_violations=self.violations["C5"],
                macs_forward=macs.forward,
                macs_backward=macs.backward,
                wall_time=time.perf_counter() - t0,
            )
            self.log.append(row, pa_mean)
            if (e + 1) % self.cfg.checkpoint_every == 0:
                good = self.agents.snapshot()
                if self.checkpoint is not None:
                    self.agents.save(self.checkpoint)
                log.info("epoch %d branch=%s objective=%.4f", e, row["branch"], row["objective"])
        if self.checkpoint is not None:
            self.agents.save(self.checkpoint)
        return self.agents, self.log


def train(scenario: Scenario, config: TrainConfig = TrainConfig(), agents: Agents | None = None,
          checkpoint=None) -> tuple[Agents, TrainLog]:
    """Train on a single scenario instance; returns the agents and the epoch log.

    Raises :class:`TrainingDiverged` on a non-finite training signal after
    restoring (and, with ``checkpoint`` set, saving) the last good parameters.
    """
    return _Trainer(scenario, config, agents, checkpoint).run()


# --- evaluation --------------------------------------------------------------------------

@dataclass
class PolicyReport:
    objective: float          # bit/s/Hz, 0 for infeasible episodes
    average_throughput: float  # bit/s/Hz
    q_eff: float              # bit/s
    qos_rate: float
    feasible_fraction: float
    episodes: int
    assignment: np.ndarray
    power: PowerAllocation
    report: RateReport        # last episode


def greedy_solution(scenario: Scenario, agents: Agents, config: TrainConfig = TrainConfig()):
    """Noise-free rollout of the current policies: ``(assignment, power allocation, report)``."""
    occ, _ = sa_rollout(scenario, agents.sa)
    if ssar(scenario, occ):
        power, _, _ = pa_rollout(scenario, occ, agents.pa, config.pa_steps, config.pa_step_size)
    else:
        power = PowerAllocation.from_indicator(initial_indicator(occ), scenario.total_power)
    return occ, power, evaluate(scenario, occ, power.powers)


def policy_solution(scenario: Scenario, agents: Agents, config: TrainConfig = TrainConfig()):
    """The resource-management result of trained agents.

    The greedy rollout, replaced by the training incumbent when that is
    better; the returned report is always a fresh evaluation.
    """
    occ, power, rep = greedy_solution(scenario, agents, config)
    inc = agents.incumbent
    if inc is not None and inc.assignment.shape == occ.shape:
        inc_rep = evaluate(scenario, inc.assignment, inc.powers)
        score = rep.objective_normalized if rep.feasible else -math.inf
        if inc_rep.feasible and inc_rep.objective_normalized > score:
            indicator = inc.powers / scenario.total_power
            return inc.assignment.copy(), PowerAllocation(indicator, inc.powers.copy()), inc_rep
    return occ, power, rep


def evaluate_policy(scenario: Scenario, agents: Agents, episodes: int = 1,
                    config: TrainConfig = TrainConfig()) -> PolicyReport:
    """Average greedy-rollout metrics over ``episodes``; infeasible episodes score 0 objective."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    objs, ats, qs, rates, feas = [], [], [], [], []
    for _ in range(episodes):
        occ, power, rep = policy_solution(scenario, agents, config)
        feas.append(rep.feasible)
        objs.append(rep.objective_normalized if rep.feasible else 0.0)
        ats.append(rep.average_throughput)
        qs.append(rep.q_eff)
        rates.append(rep.qos_rate)
    return PolicyReport(float(np.mean(objs)), float(np.mean(ats)), float(np.mean(qs)),
                        float(np.mean(rates)), float(np.mean(feas)), episodes, occ, power, rep)


# --- complexity audit --------------------------------------------------------------------

def predicted_sa_macs(n_full: int, d_res: int, num_users: int, num_subcarriers: int) -> float:
    """Per-epoch SA term of the analytic complexity model (one SA episode)."""
    return n_full * num_users * (4 * d_res * n_full + n_full + 4 * num_subcarriers)


def _conv_terms(num_users: int, num_subcarriers: int, cfg: PaNetConfig) -> int:
    spec = state_cnn_spec(num_users, num_subcarriers, cfg)
    shapes = spec.output_shapes()
    total = 0
    for layer, out in zip(spec.layers, shapes):
        if type(layer).__name__ == "Conv":
            total += out[1] * out[2] * layer.kernel**2 * layer.c_in * layer.c_out
    return total


def predicted_pa_macs(n_full: int, d_res: int, num_users: int, num_subcarriers: int,
                      steps: int, cfg: PaNetConfig = PaNetConfig()) -> float:
    """Per-epoch PA term (one PA episode of ``steps`` steps, agents in parallel)."""
    d_net = 4 * d_res + 1 + cfg.cnn_fc
    return steps * (_conv_terms(num_users, num_subcarriers, cfg)
                    + (d_net * n_full + 14 * num_subcarriers) * n_full)


@dataclass
class ComplexityAudit:
    sa_measured: int
    sa_predicted: float
    pa_measured: int
    pa_predicted: float
    sa_backward: int
    pa_backward: int

    @property
    def sa_ratio(self) -> float:
        return self.sa_measured / self.sa_predicted

    @property
    def pa_ratio(self) -> float:
        return self.pa_measured / self.pa_predicted


def complexity_audit(scenario: Scenario, config: TrainConfig = TrainConfig()) -> ComplexityAudit:
    """Instrumented forward MACs of one SA episode and one PA episode vs the analytic model.

    The model charges each SA step one actor and one critic evaluation, and
    each PA step one state-CNN, actor and critic evaluation of a single agent
    (agents run in parallel). The same evaluations are executed here on
    batch-1 inputs under the MAC counter; backward MACs of one gradient step
    on the same inputs are reported alongside.
    """
    m, n_f = scenario.num_users, scenario.num_subcarriers
    cfg = config.replace(pa_steps=max(config.pa_steps, 1))
    agents = build_agents(m, n_f, cfg)
    sa = agents.sa
    occ, steps = sa_rollout(scenario, sa)  # warm-up outside the counter
    with mac_counter() as c_sa:
        occ = np.zeros_like(occ)
        for user in range(m):
            s = encode_sa_state(scenario, occ, user)[None]
            a = sa.actor.forward(s)
            sa.critic.forward(np.hstack([s, a]))
    with mac_counter() as b_sa:
        sa.critic.backward(np.ones((1, 1)))
        sa.actor.backward(np.ones((1, n_f + 1)))

    pa = agents.pa
    assign = occ if ssar(scenario, occ) else _one_per_user(m, n_f)
    states = self_states(scenario, assign, initial_indicator(assign))[None]
    ac = pa.agents[0]
    with mac_counter() as c_pa:
        for _ in range(cfg.pa_steps):
            x = pa.policy_input(states, 0)
            a = ac.actor.forward(x)
            others = np.zeros((1, (m - 1) * n_f))
            ac.critic.forward(np.hstack([x, a, others]))
    with mac_counter() as b_pa:
        ac.critic.backward(np.ones((1, 1)))
        ac.actor.backward(np.ones((1, n_f)))
        if ac.encoder is not None:
            ac.encoder.backward(np.ones((1, pa.state_dim)))
    n_full, d_res = cfg.sa_net.n_full, cfg.sa_net.d_res
    return ComplexityAudit(
        sa_measured=c_sa.forward,
        sa_predicted=predicted_sa_macs(n_full, d_res, m, n_f),
        pa_measured=c_pa.forward,
        pa_predicted=predicted_pa_macs(cfg.pa_net.n_full, cfg.pa_net.d_res, m, n_f,
                                       cfg.pa_steps, cfg.pa_net),
        sa_backward=b_sa.backward,
        pa_backward=b_pa.backward * cfg.pa_steps,
    )


def _one_per_user(m: int, n_f: int) -> np.ndarray:
    occ = np.zeros((n_f, m), dtype=np.int64)
    occ[np.arange(m) % n_f, np.arange(m)] = 1
    return occ
