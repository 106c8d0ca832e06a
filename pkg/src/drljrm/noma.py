"""Deterministic MC-NOMA math: SIC ordering, rates under imperfect SIC,
the PDSC test, the weighted-sum objective, constraint flags and metrics.

Conventions: matrices are indexed ``[subcarrier, user]``; SIC positions are
0-based, position 0 being the strongest channel on the subcarrier.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .scenario import Scenario

__all__ = [
    "PowerAllocation",
    "RateReport",
    "sic_order",
    "residual_interference",
    "rate",
    "pdsc_satisfied",
    "normalize_power",
    "evaluate",
    "effective_throughput",
    "qos_satisfaction_rate",
    "SlotLayout",
    "slot_layout",
    "batch_evaluate",
    "report_to_csv",
]

POWER_ATOL = 1e-12
RATE_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    indicator: np.ndarray
    powers: np.ndarray
    relaxed: tuple = ()  # constraints a fallback search had to drop

    @classmethod
    def from_indicator(cls, indicator, total_power: float) -> "PowerAllocation":
        v = np.asarray(indicator, dtype=np.float64)
        return cls(indicator=v, powers=normalize_power(v, total_power))


@dataclass(eq=False)
class RateReport:
    rates: np.ndarray                 # per (subcarrier, user), bit/s
    user_totals: np.ndarray           # bit/s
    objective: float                  # weighted bit/s
    sum_rate: float                   # bit/s
    flags: dict[str, bool]
    pdsc_ok: np.ndarray               # per (subcarrier, user); True where unassigned
    q_eff: float = 0.0
    qos_rate: float = 0.0
    bandwidth: float = 1.0
    extras: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return all(self.flags.values())

    @property
    def objective_normalized(self) -> float:
        """Objective in bit/s/Hz."""
        return self.objective / self.bandwidth

    @property
    def average_throughput(self) -> float:
        """Unweighted sum rate in bit/s/Hz."""
        return self.sum_rate / self.bandwidth


def sic_order(scenario: Scenario, assignment) -> list[np.ndarray]:
    """Users multiplexed on each subcarrier, strongest gain first.

    Ties go to the lower user index.
    """
    occ = np.asarray(assignment)
    if occ.shape != scenario.gains.shape:
        raise ValueError(f"assignment shape {occ.shape} != gains shape {scenario.gains.shape}")
    order = []
    for i in range(scenario.num_subcarriers):
        users = np.flatnonzero(occ[i] != 0)
        # lexsort sorts by the last key first: descending gain, then ascending id
        idx = np.lexsort((users, -scenario.gains[i, users]))
        order.append(users[idx])
    return order


def residual_interference(scenario: Scenario, order, powers, i: int, j: int) -> float:
    """Leftover power after cancelling the weaker users at position ``j``.

    Uses each cancelled user's own gain, i.e. ``eps^2 * sum_{k>j} p_k |h_k|^2``.
    """
    users = order[i]
    if not 0 <= j < len(users):
        raise IndexError(f"position {j} out of range for subcarrier {i}")
    weaker = users[j + 1:]
    p = np.asarray(powers)[i, weaker]
    return float(scenario.sic_error_sq * np.sum(p * scenario.gains[i, weaker]))


def rate(scenario: Scenario, order, powers, i: int, j: int) -> float:
    """Achievable rate in bit/s of the user at SIC position ``j`` of subcarrier ``i``."""
    users = order[i]
    if not 0 <= j < len(users):
        raise IndexError(f"position {j} out of range for subcarrier {i}")
    p = np.asarray(powers)[i]
    g = scenario.gains[i, users[j]]
    signal = p[users[j]] * g
    if signal == 0.0:
        return 0.0
    uncancelled = np.sum(p[users[:j]]) * g
    denom = uncancelled + residual_interference(scenario, order, powers, i, j) + scenario.noise_var
    return float(scenario.subcarrier_bandwidth * np.log2(1.0 + signal / denom))


def pdsc_satisfied(scenario: Scenario, order, powers, i: int, j: int) -> bool:
    """Power disparity and sensitivity check for SIC position ``j``."""
    users = order[i]
    p = np.asarray(powers)[i]
    margin = scenario.gains[i, users[j]] * (p[users[j]] - np.sum(p[users[:j]]))
    return bool(margin >= scenario.pdsc_threshold * (1.0 - RATE_RTOL))


def normalize_power(indicator, total_power: float) -> np.ndarray:
    """Scale a nonnegative indicator so it sums to ``total_power``.

    An all-zero indicator maps to all-zero powers.
    """
    v = np.asarray(indicator, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("power indicator must be nonnegative")
    s = v.sum()
    if s <= 0:
        return np.zeros_like(v)
    return total_power * v / s


def evaluate(scenario: Scenario, assignment, powers) -> RateReport:
    """Rates, objective, C1-C6 flags and QoS metrics. Never raises on infeasibility."""
    occ = np.asarray(assignment)
    p = np.asarray(powers, dtype=np.float64)
    if p.shape != scenario.gains.shape:
        raise ValueError(f"powers shape {p.shape} != gains shape {scenario.gains.shape}")
    order = sic_order(scenario, occ)
    rates = np.zeros_like(p)
    pdsc_ok = np.ones(p.shape, dtype=bool)
    for i, users in enumerate(order):
        for j, m in enumerate(users):
            rates[i, m] = rate(scenario, order, p, i, j)
            pdsc_ok[i, m] = pdsc_satisfied(scenario, order, p, i, j)

    totals = rates.sum(axis=0)
    objective = float(np.dot(scenario.weights, totals))
    binary = bool(np.all((occ == 0) | (occ == 1)))
    flags = {
        "C1": bool(p.sum() <= scenario.total_power * (1.0 + RATE_RTOL) + POWER_ATOL),
        "C2": bool(pdsc_ok.all()),
        "C3": bool(np.all(p >= -POWER_ATOL)),
        "C4": bool(np.all(occ.sum(axis=1) <= scenario.max_per_subcarrier)),
        "C5": bool(np.all(totals >= scenario.qos_min * (1.0 - RATE_RTOL))),
        "C6": binary,
    }
    report = RateReport(
        rates=rates,
        user_totals=totals,
        objective=objective,
        sum_rate=float(totals.sum()),
        flags=flags,
        pdsc_ok=pdsc_ok,
        bandwidth=scenario.bandwidth,
    )
    report.q_eff = effective_throughput(report, scenario)
    report.qos_rate = qos_satisfaction_rate(report, scenario)
    return report


def _meets_qos(report: RateReport, scenario: Scenario) -> np.ndarray:
    # sgn(0) = 1: a user exactly at its threshold counts as satisfied
    return report.user_totals - scenario.qos_min >= 0


def effective_throughput(report: RateReport, scenario: Scenario) -> float:
    """Throughput summed over QoS-satisfied users only, bit/s."""
    sgn = np.where(_meets_qos(report, scenario), 1.0, -1.0)
    return float(np.sum(0.5 * report.user_totals * (sgn + 1.0)))


def qos_satisfaction_rate(report: RateReport, scenario: Scenario) -> float:
    return float(np.mean(_meets_qos(report, scenario)))


# --- batched evaluation for a fixed assignment -----------------------------------

@dataclass(frozen=True, eq=False)
class SlotLayout:
    """Assigned (subcarrier, user) slots of one assignment, grouped by subcarrier
    in SIC order. ``groups[i]`` is a slice into the slot arrays."""

    subcarriers: np.ndarray
    users: np.ndarray
    gains: np.ndarray
    groups: tuple
    user_matrix: np.ndarray  # (num_slots, num_users) one-hot

    @property
    def size(self) -> int:
        return len(self.users)


def slot_layout(scenario: Scenario, assignment) -> SlotLayout:
    order = sic_order(scenario, assignment)
    subs, users, groups = [], [], []
    start = 0
    for i, us in enumerate(order):
        subs.extend([i] * len(us))
        users.extend(us.tolist())
        groups.append(slice(start, start + len(us)))
        start += len(us)
    subs = np.array(subs, dtype=np.int64)
    users = np.array(users, dtype=np.int64)
    um = np.zeros((len(users), scenario.num_users))
    um[np.arange(len(users)), users] = 1.0
    return SlotLayout(subs, users, scenario.gains[subs, users], tuple(groups), um)


def batch_evaluate(scenario: Scenario, layout: SlotLayout, slot_powers: np.ndarray):
    """Evaluate many power vectors for one assignment at once.

    ``slot_powers`` has shape ``(B, layout.size)`` in layout slot order.
    Returns ``(objective, c2_ok, c5_ok)``, each of length ``B``.
    """
    p = np.atleast_2d(np.asarray(slot_powers, dtype=np.float64))
    n = p.shape[0]
    rates = np.empty_like(p)
    c2 = np.ones(n, dtype=bool)
    eps2 = scenario.sic_error_sq
    for sl in layout.groups:
        if sl.stop == sl.start:
            continue
        ps = p[:, sl]
        g = layout.gains[sl]
        stronger = np.cumsum(ps, axis=1) - ps
        pg = ps * g
        weaker = np.cumsum(pg[:, ::-1], axis=1)[:, ::-1] - pg
        denom = stronger * g + eps2 * weaker + scenario.noise_var
        rates[:, sl] = scenario.subcarrier_bandwidth * np.log2(1.0 + pg / denom)
        margin = g * (ps - stronger)
        c2 &= np.all(margin >= scenario.pdsc_threshold * (1.0 - RATE_RTOL), axis=1)
    totals = rates @ layout.user_matrix
    objective = totals @ scenario.weights
    c5 = np.all(totals >= scenario.qos_min * (1.0 - RATE_RTOL), axis=1)
    return objective, c2, c5


def report_to_csv(report: RateReport) -> str:
    """One row per (subcarrier, user) rate followed by a summary row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subcarrier", "user", "rate_bps"])
    n_f, m = report.rates.shape
    for i in range(n_f):
        for u in range(m):
            w.writerow([i, u, repr(float(report.rates[i, u]))])
    w.writerow(["summary", "objective", repr(report.objective)])
    w.writerow(["summary", "sum_rate", repr(report.sum_rate)])
    w.writerow(["summary", "q_eff", repr(report.q_eff)])
    w.writerow(["summary", "qos_rate", repr(report.qos_rate)])
    for k, v in report.flags.items():
        w.writerow(["summary", k, int(v)])
    return buf.getvalue()
