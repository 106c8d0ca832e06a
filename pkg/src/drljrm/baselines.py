"""Classical solvers: exhaustive enumeration over (assignment, power grid),
greedy and random subcarrier assignment, grid power search and an OMA baseline.

Power grids are indicator grids: every assigned slot takes a level in
``{1, ..., L}`` and the indicator is normalised to the power budget, so C1
and C3 hold by construction.
"""

from __future__ import annotations

import functools
import itertools
import math
from typing import NamedTuple

import numpy as np

from .noma import PowerAllocation, RateReport, batch_evaluate, evaluate, slot_layout
from .scenario import Scenario

__all__ = [
    "Solution",
    "SearchBudgetExceeded",
    "DEFAULT_BUDGET",
    "exhaustive_solve",
    "search_space_size",
    "greedy_sa",
    "random_sa",
    "grid_pa",
    "oma_solve",
    "heuristic_solve",
]

DEFAULT_BUDGET = 10**8


class SearchBudgetExceeded(RuntimeError):
    def __init__(self, size: int, budget: int):
        super().__init__(f"search space of {size} evaluations exceeds budget {budget}")
        self.size = size
        self.budget = budget


class Solution(NamedTuple):
    assignment: np.ndarray
    power: PowerAllocation
    report: RateReport


@functools.lru_cache(maxsize=64)
def _grid(levels: int, slots: int) -> np.ndarray:
    """All indicator vectors in {1..L}^slots, lexicographic order."""
    if slots == 0:
        return np.zeros((1, 0))
    axes = np.indices((levels,) * slots).reshape(slots, -1).T + 1
    out = axes.astype(np.float64)
    out.setflags(write=False)
    return out


def _subcarrier_options(num_users: int, cap: int) -> list[tuple[int, ...]]:
    opts = []
    for k in range(cap + 1):
        opts.extend(itertools.combinations(range(num_users), k))
    return opts


def _covering_assignments(scenario: Scenario):
    """Yield every C4/C6-feasible occupancy matrix that serves all users.

    Users without a subcarrier have zero rate and cannot meet a positive
    minimum rate, so those assignments are skipped.
    """
    m, n_f = scenario.num_users, scenario.num_subcarriers
    opts = _subcarrier_options(m, scenario.max_per_subcarrier)
    need_all = bool(np.all(scenario.qos_min > 0))
    for combo in itertools.product(opts, repeat=n_f):
        occ = np.zeros((n_f, m), dtype=np.int64)
        for i, users in enumerate(combo):
            occ[i, list(users)] = 1
        if need_all and not occ.any(axis=0).all():
            continue
        if not occ.any():
            continue
        yield occ


def search_space_size(scenario: Scenario, levels: int) -> int:
    """Number of (assignment, grid point) evaluations :func:`exhaustive_solve` performs."""
    return sum(levels ** int(occ.sum()) for occ in _covering_assignments(scenario))


def _best_on_grid(scenario: Scenario, occ: np.ndarray, levels: int):
    """Return (objective, c2, c5, grid, layout) for one assignment."""
    layout = slot_layout(scenario, occ)
    grid = _grid(levels, layout.size)
    powers = scenario.total_power * grid / grid.sum(axis=1, keepdims=True)
    obj, c2, c5 = batch_evaluate(scenario, layout, powers)
    return obj, c2, c5, grid, layout


def _indicator_matrix(scenario: Scenario, layout, row: np.ndarray) -> np.ndarray:
    v = np.zeros(scenario.gains.shape)
    v[layout.subcarriers, layout.users] = row
    return v


def exhaustive_solve(scenario: Scenario, levels: int = 4, budget: int = DEFAULT_BUDGET):
    """Best C1-C6-feasible (assignment, grid power) pair by the weighted-sum objective.

    Returns a :class:`Solution`, or ``None`` when no enumerated point is
    feasible. Raises :class:`SearchBudgetExceeded` before doing any work if
    the enumeration would exceed ``budget`` evaluations.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    size = search_space_size(scenario, levels)
    if size > budget:
        raise SearchBudgetExceeded(size, budget)

    best_val = -np.inf
    best = None
    for occ in _covering_assignments(scenario):
        obj, c2, c5, grid, layout = _best_on_grid(scenario, occ, levels)
        ok = c2 & c5
        if not ok.any():
            continue
        masked = np.where(ok, obj, -np.inf)
        k = int(np.argmax(masked))
        if masked[k] > best_val:
            best_val = masked[k]
            best = (occ, _indicator_matrix(scenario, layout, grid[k]))
    if best is None:
        return None
    occ, v = best
    power = PowerAllocation.from_indicator(v, scenario.total_power)
    return Solution(occ, power, evaluate(scenario, occ, power.powers))


def grid_pa(scenario: Scenario, assignment, levels: int = 4,
            budget: int = DEFAULT_BUDGET) -> PowerAllocation:
    """Best grid power for a fixed assignment.

    Among points satisfying C2 and C5 the objective is maximised (ties go to
    the lexicographically smallest indicator). If none exists the search
    drops C5, then C2, and records the dropped constraints in
    ``PowerAllocation.relaxed``.
    """
    occ = np.asarray(assignment, dtype=np.int64)
    slots = int(occ.sum())
    if slots == 0:
        z = np.zeros(scenario.gains.shape)
        return PowerAllocation(z, z.copy())
    if levels**slots > budget:
        raise SearchBudgetExceeded(levels**slots, budget)
    obj, c2, c5, grid, layout = _best_on_grid(scenario, occ, levels)
    relaxed: tuple[str, ...] = ()
    for mask, dropped in ((c2 & c5, ()), (c2, ("C5",)), (np.ones_like(c2), ("C2", "C5"))):
        if mask.any():
            relaxed = dropped
            break
    k = int(np.argmax(np.where(mask, obj, -np.inf)))
    v = _indicator_matrix(scenario, layout, grid[k])
    power = PowerAllocation.from_indicator(v, scenario.total_power)
    return PowerAllocation(power.indicator, power.powers, relaxed)


def greedy_sa(scenario: Scenario) -> np.ndarray:
    """Priority-ordered greedy subcarrier assignment.

    Users are visited in descending ``weight * best gain``; each takes its
    best subcarrier that still has room. A second pass hands every idle
    subcarrier to the highest-gain user still under the per-user cap
    ``ceil(N_F * N_max / M)``. Ties go to the lower index.
    """
    g = scenario.gains
    n_f, m = g.shape
    cap = math.ceil(n_f * scenario.max_per_subcarrier / m)
    room = np.full(n_f, scenario.max_per_subcarrier)
    occ = np.zeros((n_f, m), dtype=np.int64)
    priority = scenario.weights * g.max(axis=0)
    users = sorted(range(m), key=lambda u: (-priority[u], u))
    for u in users:
        for i in sorted(range(n_f), key=lambda s: (-g[s, u], s)):
            if room[i] > 0:
                occ[i, u] = 1
                room[i] -= 1
                break
    for i in range(n_f):
        if occ[i].any():
            continue
        cands = [u for u in users if occ[:, u].sum() < cap]
        if not cands:
            continue
        u = min(cands, key=lambda c: (-g[i, c], c))
        occ[i, u] = 1
        room[i] -= 1
    return occ


def random_sa(scenario: Scenario, seed: int | np.random.Generator | None = None,
              max_tries: int = 10_000) -> np.ndarray:
    """Uniformly random C4/C6-feasible assignment serving every user if possible.

    Rejection sampling over independent per-subcarrier subsets of size at
    most ``N_max``; the accepted sample is uniform over the covering set.
    """
    rng = np.random.default_rng(seed)
    n_f, m = scenario.gains.shape
    opts = _subcarrier_options(m, scenario.max_per_subcarrier)
    can_cover = n_f * scenario.max_per_subcarrier >= m
    occ = np.zeros((n_f, m), dtype=np.int64)
    for _ in range(max_tries):
        occ[:] = 0
        for i, k in enumerate(rng.integers(len(opts), size=n_f)):
            occ[i, list(opts[k])] = 1
        if not can_cover or occ.any(axis=0).all():
            return occ
    # capacity permits coverage but rejection kept failing: build one directly
    occ[:] = 0
    room = np.full(n_f, scenario.max_per_subcarrier)
    for u in rng.permutation(m):
        i = rng.choice(np.flatnonzero(room > 0))
        occ[i, u] = 1
        room[i] -= 1
    return occ


def oma_solve(scenario: Scenario, levels: int = 4,
              budget: int = DEFAULT_BUDGET) -> Solution:
    """One user per subcarrier, then grid power.

    Subcarriers are handed out greedily by ``weight * gain``, restricted to
    still-unserved users while any remain.
    """
    g = scenario.gains
    n_f, m = g.shape
    occ = np.zeros((n_f, m), dtype=np.int64)
    served = np.zeros(m, dtype=bool)
    free = list(range(n_f))
    score = g * scenario.weights[None, :]
    while free:
        cand_users = np.flatnonzero(~served) if not served.all() else np.arange(m)
        best = max(((i, u) for i in free for u in cand_users),
                   key=lambda iu: (score[iu], -iu[0], -iu[1]))
        occ[best] = 1
        served[best[1]] = True
        free.remove(best[0])
    power = grid_pa(scenario, occ, levels, budget)
    return Solution(occ, power, evaluate(scenario, occ, power.powers))


def heuristic_solve(scenario: Scenario, assignment, levels: int = 4,
                    budget: int = DEFAULT_BUDGET) -> Solution:
    """Pair any assignment heuristic with :func:`grid_pa`."""
    occ = np.asarray(assignment, dtype=np.int64)
    power = grid_pa(scenario, occ, levels, budget)
    return Solution(occ, power, evaluate(scenario, occ, power.powers))
