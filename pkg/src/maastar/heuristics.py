"""Upper-bound value tables h^t(s) and the policy-vector heuristic built from them."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .evaluation import reachable_distribution
from .model import DecPomdp
from .policy import PolicyVector


@dataclass(frozen=True, eq=False)
class HeuristicTable:
    """values[t, s] bounds the best decentralized value with t steps left from state s.

    Row 0 is always zero. `horizon` is the largest number of remaining steps covered.
    """

    values: np.ndarray
    kind: str = "external"
    subsearch_evaluated: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError("heuristic values must be a (horizon + 1, n_states) array")
        if np.any(values[0] != 0.0):
            raise ValueError("row 0 of a heuristic table must be zero")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    def row(self, steps_left: int) -> np.ndarray:
        if not 0 <= steps_left <= self.horizon:
            raise ValueError(f"table covers 0..{self.horizon} steps, asked for {steps_left}")
        return self.values[steps_left]


def mdp_values(model: DecPomdp, horizon: int) -> HeuristicTable:
    """Finite-horizon value iteration on the fully observable joint-action MDP."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    rows = [np.zeros(model.n_states)]
    for _ in range(horizon):
        q = model.reward + model.transition @ rows[-1]
        rows.append(q.max(axis=1))
    return HeuristicTable(np.vstack(rows), "mdp")


Solver = Callable[[DecPomdp, int, HeuristicTable], "object"]


def _default_solver(model: DecPomdp, horizon: int, table: HeuristicTable):
    from .search import Options, maa_star

    return maa_star(model, Options(horizon=horizon), table)


def recursive_values(model: DecPomdp, horizon: int, solver: Solver | None = None) -> HeuristicTable:
    """Exact decentralized optima V*^t(s) for t = 0..horizon-1, from point-mass starts.

    Rows are filled bottom-up; the search for row t uses rows 0..t-1 as its own (exact)
    heuristic, so each (state, t) pair costs one search. The returned table therefore has
    `horizon - 1` as its own horizon, which is all a horizon-`horizon` search consults.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    solver = solver or _default_solver
    rows = [np.zeros(model.n_states)]
    if horizon >= 2:
        rows.append(model.reward.max(axis=1))
    spent = 0
    for t in range(2, horizon):
        partial = HeuristicTable(np.vstack(rows), "recursive")
        row = np.empty(model.n_states)
        for s in range(model.n_states):
            result = solver(model.with_start(model.point_mass(s)), t, partial)
            if not result.proven_optimal:
                raise RuntimeError(f"subsearch for state {model.states[s]}, horizon {t} did not finish")
            row[s] = result.value
            spent += result.stats.evaluated_count + result.stats.subsearch_evaluated
        rows.append(row)
    return HeuristicTable(np.vstack(rows), "recursive", subsearch_evaluated=spent)


def heuristic_H(model: DecPomdp, delta: PolicyVector, table: HeuristicTable, horizon: int) -> float:
    """Expected table value over the states reachable after executing `delta`."""
    steps_left = horizon - delta.depth
    if steps_left < 0:
        raise ValueError("policy vector is deeper than the horizon")
    if steps_left > table.horizon:
        raise ValueError(f"table covers {table.horizon} remaining steps, need {steps_left}")
    return float(reachable_distribution(model, delta) @ table.values[steps_left])
