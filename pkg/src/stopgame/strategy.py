"""Feedback policy tables and the stopping rule extracted from a value grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GameModel, compute_bounds
from .solver import ValueGrid, default_binding_eps


@dataclass(frozen=True)
class PolicyTable:
    """Grid-tabulated feedback actions, piecewise constant and
    right-continuous in time (entry at s_m applies on [s_m, s_{m+1}))."""

    times: np.ndarray    # (M+1,)
    actions: np.ndarray  # (M+1, d), int
    side: str            # "min" | "max"

    def __post_init__(self):
        dt = np.diff(self.times)
        step = float(dt[0]) if len(dt) and np.allclose(dt, dt[0]) else None
        object.__setattr__(self, "_step", step)
        eps = 1e-12 * max(1.0, float(self.times[-1]))
        object.__setattr__(self, "_eps", eps)

    def cell_indices(self, ts) -> np.ndarray:
        """Grid cell of each time (right-continuous lookup), vectorized."""
        ts = np.asarray(ts, dtype=np.float64)
        if self._step is not None:
            idx = ((ts - self.times[0] + self._eps) / self._step).astype(np.int64)
        else:
            idx = np.searchsorted(self.times, ts + self._eps, side="right") - 1
        return np.clip(idx, 0, len(self.times) - 1)

    def action(self, t: float, i: int) -> int:
        if self._step is not None:
            m = int((t - self.times[0] + self._eps) / self._step)
            m = min(max(m, 0), len(self.times) - 1)
        else:
            m = _cell_index(self.times, t)
        return int(self.actions[m, i])


@dataclass(frozen=True)
class StoppingRule:
    """Grid-tabulated stop/continue indicator, right-continuous in time."""

    times: np.ndarray      # (M+1,)
    indicator: np.ndarray  # (M+1, d), {0,1}


def _cell_index(times: np.ndarray, t: float) -> int:
    eps = 1e-12 * max(1.0, times[-1])
    m = int(np.searchsorted(times, t + eps, side="right")) - 1
    return min(max(m, 0), len(times) - 1)


def _brackets_at_node(model: GameModel, t: float, w: np.ndarray) -> np.ndarray:
    """(d, n_u, n_v) bracket values Q_i . w + h_i at one grid node."""
    q = model.q_at(t)
    h = model.h_at(t)
    return np.moveaxis(q @ w, -1, 0) + h


def extract_min_policy(grid: ValueGrid, model: GameModel) -> PolicyTable:
    """Minimizer actions: argmin_u max_v of the bracket at each (node, state)."""
    if grid.d != model.d:
        raise ValueError("grid/model dimension mismatch")
    M1 = len(grid.times)
    actions = np.empty((M1, model.d), dtype=np.int64)
    for m in range(M1):
        br = _brackets_at_node(model, grid.times[m], grid.values[m])
        actions[m] = np.argmin(br.max(axis=2), axis=1)
    return PolicyTable(times=grid.times, actions=actions, side="min")


def extract_max_policy(grid: ValueGrid, model: GameModel) -> PolicyTable:
    """Maximizer actions: argmax_v min_u of the bracket at each (node, state)."""
    if grid.d != model.d:
        raise ValueError("grid/model dimension mismatch")
    M1 = len(grid.times)
    actions = np.empty((M1, model.d), dtype=np.int64)
    for m in range(M1):
        br = _brackets_at_node(model, grid.times[m], grid.values[m])
        actions[m] = np.argmax(br.min(axis=1), axis=1)
    return PolicyTable(times=grid.times, actions=actions, side="max")


def extract_stopping_rule(grid: ValueGrid, model: GameModel,
                          binding_eps: float | None = None) -> StoppingRule:
    """Indicator of the binding set (value touches g); always 1 at T."""
    if binding_eps is None:
        binding_eps = default_binding_eps(compute_bounds(model))
    ind = (grid.values >= grid.g - binding_eps).astype(np.uint8)
    ind[-1, :] = 1
    return StoppingRule(times=grid.times, indicator=ind)


def first_hitting_time(rule: StoppingRule, t0: float, path) -> tuple[float, int]:
    """First grid node time s >= t0 where the rule fires for the path state.

    ``path`` is either a Trajectory (anything with a ``states_at`` method)
    or an array of path states at every grid node.  Returns (time, node
    index); the last node (time T) at the latest since the indicator is
    forced to 1 there.
    """
    if hasattr(path, "states_at"):
        states_at_nodes = path.states_at(rule.times)
    else:
        states_at_nodes = np.asarray(path)
    times = rule.times
    eps = 1e-12 * max(1.0, times[-1])
    m0 = int(np.searchsorted(times, t0 - eps))
    fired = rule.indicator[np.arange(m0, len(times)),
                           states_at_nodes[m0:]].nonzero()[0]
    m = m0 + int(fired[0]) if len(fired) else len(times) - 1
    return float(times[m]), m


def export_policy(policy: PolicyTable, path) -> None:
    """CSV rows (t, state, action)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("t,state,action\n")
        for m, t in enumerate(policy.times):
            for i in range(policy.actions.shape[1]):
                f.write(f"{t:.17g},{i},{policy.actions[m, i]}\n")


def export_stopping_rule(rule: StoppingRule, path) -> None:
    """CSV rows (t, state, stop)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("t,state,stop\n")
        for m, t in enumerate(rule.times):
            for i in range(rule.indicator.shape[1]):
                f.write(f"{t:.17g},{i},{rule.indicator[m, i]}\n")
