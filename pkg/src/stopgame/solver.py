"""Backward constructive scheme for the obstacle-constrained value system.

The value is built backward over N outer intervals: within each interval the
un-projected psi solves dpsi/dt = -H(t, psi) (classical RK4 with S fixed
substeps), and the value is the pointwise minimum of psi and the stopping
payoff g at every substep node.  The interval is re-seeded from the projected
value at its right endpoint.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import Bounds, GameModel, compute_bounds


def default_binding_eps(bounds: Bounds) -> float:
    """Tolerance for 'value touches g' tests (absolute-relative mix)."""
    return 1e-9 * (1.0 + bounds.m_g)


@dataclass(frozen=True)
class ValueGrid:
    """Tabulated value on the uniform grid of M+1 = n_outer*substeps+1 nodes."""

    times: np.ndarray        # (M+1,)
    values: np.ndarray       # (M+1, d): projected value
    psi_values: np.ndarray   # (M+1, d): un-projected psi per outer interval
    g: np.ndarray            # (M+1, d): obstacle at the nodes
    n_outer: int
    substeps: int

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def node_at_or_after(self, t: float) -> int:
        """Index of the first grid node >= t (clipped to the last node)."""
        m = int(np.searchsorted(self.times, t - 1e-12 * max(1.0, self.times[-1])))
        return min(m, len(self.times) - 1)


@dataclass(frozen=True)
class ResidualReport:
    """Numerical residuals of the four value-system conditions."""

    terminal_error: float
    max_obstacle_violation: float
    max_z3_violation: float   # over non-binding interior nodes
    max_z4_violation: float   # over all interior nodes
    binding_set_size: int
    fd_tol: float

    @property
    def ok(self) -> bool:
        return (self.terminal_error <= 0.0
                and self.max_obstacle_violation <= 0.0
                and self.max_z3_violation <= self.fd_tol
                and self.max_z4_violation <= self.fd_tol)


def solve_zachrisson(model: GameModel, n_outer: int, substeps: int = 8,
                     bounds: Bounds | None = None) -> ValueGrid:
    """Run the backward scheme; returns the dense value grid.

    If the substep exceeds the explicit-scheme stability bound 1/(d m_q),
    substeps is increased automatically (with a warning).
    """
    if n_outer < 1 or substeps < 1:
        raise ValueError("n_outer and substeps must be >= 1")
    if bounds is None:
        bounds = compute_bounds(model)
    rate = model.d * bounds.m_q
    if rate > 0 and model.T / (n_outer * substeps) > 1.0 / rate:
        requested = substeps
        while model.T / (n_outer * substeps) > 1.0 / rate:
            substeps *= 2
        warnings.warn(
            f"step exceeded stability bound 1/(d*m_q); substeps raised "
            f"from {requested} to {substeps}", RuntimeWarning)
    M = n_outer * substeps
    dt = model.T / M
    half_times = np.linspace(0.0, model.T, 2 * M + 1)
    node_times = half_times[::2].copy()
    q_half = model.q_fn(half_times)
    h_half = model.h_fn(half_times)
    g_nodes = model.g_fn(node_times)
    values, psi_values = kernels.backward_sweep(
        q_half, h_half, g_nodes, n_outer, substeps, dt)
    return ValueGrid(times=node_times, values=values, psi_values=psi_values,
                     g=g_nodes, n_outer=n_outer, substeps=substeps)


def convergence_study(model: GameModel, n_list, substeps: int = 8):
    """Sup-norm differences between solves at consecutive outer resolutions.

    Returns a list of (n_coarse, n_fine, sup_diff) where the difference is
    taken over the grid nodes shared by both solves.  Consecutive entries of
    ``n_list`` must divide each other so that the grids nest.
    """
    n_list = list(n_list)
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    grids = [solve_zachrisson(model, n, substeps) for n in n_list]
    out = []
    for (na, ga), (nb, gb) in zip(zip(n_list, grids), zip(n_list[1:], grids[1:])):
        if nb % na != 0:
            raise ValueError(f"grids do not nest: {na} does not divide {nb}")
        r = nb // na
        diff = float(np.max(np.abs(ga.values - gb.values[::r])))
        out.append((na, nb, diff))
    return out


def check_residuals(grid: ValueGrid, model: GameModel, fd_tol: float,
                    binding_eps: float | None = None,
                    bounds: Bounds | None = None) -> ResidualReport:
    """Central-difference residuals of the four value-system conditions.

    Z3 (supersolution off the binding set) is checked where the value sits
    strictly below g; Z4 (subsolution) at every interior node.  Raw positive
    parts are reported; ``ok`` compares them against ``fd_tol``.
    """
    if grid.d != model.d:
        raise ValueError("grid/model dimension mismatch")
    if bounds is None:
        bounds = compute_bounds(model)
    if binding_eps is None:
        binding_eps = default_binding_eps(bounds)
    phi = grid.values
    g = grid.g
    M = len(grid.times) - 1
    terminal_error = float(np.max(np.abs(phi[M] - g[M])))
    max_obstacle = float(max(0.0, np.max(phi - g)))
    dphi = (phi[2:] - phi[:-2]) / (2.0 * grid.step)
    ham = np.empty((M - 1, grid.d))
    q_mid = model.q_fn(grid.times[1:-1])
    h_mid = model.h_fn(grid.times[1:-1])
    for k in range(M - 1):
        ham[k] = kernels.ham_values(q_mid[k], h_mid[k], phi[k + 1])
    nonbinding = phi[1:-1] < g[1:-1] - binding_eps
    z3 = dphi + ham
    z4 = -ham - dphi
    max_z3 = float(np.max(np.where(nonbinding, z3, -np.inf), initial=0.0))
    max_z4 = float(np.max(z4, initial=0.0))
    binding = int(np.sum(phi >= g - binding_eps))
    return ResidualReport(
        terminal_error=terminal_error,
        max_obstacle_violation=max_obstacle,
        max_z3_violation=max(0.0, max_z3),
        max_z4_violation=max(0.0, max_z4),
        binding_set_size=binding,
        fd_tol=fd_tol)


def default_fd_tol(model: GameModel, n_outer: int, substeps: int,
                   bounds: Bounds | None = None) -> float:
    """Step-proportional residual tolerance calibrated to the model bounds."""
    if bounds is None:
        bounds = compute_bounds(model)
    step = model.T / (n_outer * substeps)
    scale = bounds.c2 + bounds.d * bounds.m_q * bounds.c3 + bounds.l_g
    return 10.0 * max(1.0, scale) * step


def export_valuegrid(grid: ValueGrid, path) -> None:
    """Write the grid as CSV rows (t, state, value, psi, g)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        wr = csv.writer(f)
        wr.writerow(["t", "state", "value", "psi", "g"])
        for m, t in enumerate(grid.times):
            for i in range(grid.d):
                wr.writerow([f"{t:.17g}", i, f"{grid.values[m, i]:.17g}",
                             f"{grid.psi_values[m, i]:.17g}",
                             f"{grid.g[m, i]:.17g}"])


def load_valuegrid(path, n_outer: int, substeps: int) -> ValueGrid:
    """Read a grid exported by :func:`export_valuegrid`."""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        rd = csv.reader(f)
        header = next(rd)
        if header != ["t", "state", "value", "psi", "g"]:
            raise ValueError(f"unexpected header {header!r}")
        for row in rd:
            rows.append((float(row[0]), int(row[1]), float(row[2]),
                         float(row[3]), float(row[4])))
    d = max(r[1] for r in rows) + 1
    M1 = len(rows) // d
    if M1 * d != len(rows) or M1 != n_outer * substeps + 1:
        raise ValueError("row count does not match n_outer*substeps+1 nodes")
    times = np.array([rows[m * d][0] for m in range(M1)])
    values = np.array([r[2] for r in rows]).reshape(M1, d)
    psi = np.array([r[3] for r in rows]).reshape(M1, d)
    g = np.array([r[4] for r in rows]).reshape(M1, d)
    return ValueGrid(times=times, values=values, psi_values=psi, g=g,
                     n_outer=n_outer, substeps=substeps)
