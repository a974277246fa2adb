"""Game instances: validation, loading, random generation, a-priori bounds.

A game lives on states {0, ..., d-1} and a horizon [0, T].  Both players pick
actions from finite sets; the controlled generator Q(t, u, v) drives the jump
process, h is the running cost rate and g the stopping payoff.  Coefficients
are either closed-form (shipped demo instances) or tabulated on a time grid
with piecewise-linear interpolation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

KOLMOGOROV_TOL = 1e-9


class ModelError(ValueError):
    """Raised when a model document is malformed or violates an invariant."""


@dataclass(frozen=True)
class Tables:
    """Raw tabulation of the coefficients on a strictly increasing time grid."""

    times: np.ndarray  # (K,)
    q: np.ndarray      # (K, n_u, n_v, d, d)
    h: np.ndarray      # (K, d, n_u, n_v)
    g: np.ndarray      # (K, d)


def interp_table(times: np.ndarray, tab: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation of ``tab`` (leading axis = time) at ``ts``.

    Exact at the tabulation nodes.  ``ts`` must be 1-d; the result has the
    same leading length followed by the trailing shape of ``tab``.
    """
    ts = np.asarray(ts, dtype=np.float64)
    idx = np.clip(np.searchsorted(times, ts, side="right") - 1, 0, len(times) - 2)
    t0 = times[idx]
    t1 = times[idx + 1]
    w = (ts - t0) / (t1 - t0)
    w = w.reshape((-1,) + (1,) * (tab.ndim - 1))
    return tab[idx] * (1.0 - w) + tab[idx + 1] * w


@dataclass(frozen=True)
class GameModel:
    """Immutable game instance.

    ``q_fn``, ``h_fn``, ``g_fn`` are vectorized over a 1-d array of times and
    return arrays of shape (L, n_u, n_v, d, d), (L, d, n_u, n_v) and (L, d).
    ``l_g`` is a Lipschitz constant of g in t (analytic for builtins, max
    adjacent slope for tabulations).
    """

    d: int
    T: float
    actions_u: tuple
    actions_v: tuple
    q_fn: Callable[[np.ndarray], np.ndarray]
    h_fn: Callable[[np.ndarray], np.ndarray]
    g_fn: Callable[[np.ndarray], np.ndarray]
    l_g: float
    name: str = ""
    tables: Tables | None = None
    # optional fast scalar row evaluator (t, i, u, v) -> (d,); the generic
    # path rebuilds the full coefficient stack per call, which dominates
    # the thinning loop otherwise
    q_row_fn: Callable | None = None

    @property
    def n_u(self) -> int:
        return len(self.actions_u)

    @property
    def n_v(self) -> int:
        return len(self.actions_v)

    # scalar-time conveniences -------------------------------------------
    def q_at(self, t: float) -> np.ndarray:
        """(n_u, n_v, d, d) generator stack at a single time."""
        return self.q_fn(np.array([t], dtype=np.float64))[0]

    def h_at(self, t: float) -> np.ndarray:
        """(d, n_u, n_v) running-cost stack at a single time."""
        return self.h_fn(np.array([t], dtype=np.float64))[0]

    def g_at(self, t: float) -> np.ndarray:
        """(d,) stopping payoff at a single time."""
        return self.g_fn(np.array([t], dtype=np.float64))[0]

    def q_row(self, t: float, i: int, u: int, v: int) -> np.ndarray:
        """Row i of Q(t, u, v)."""
        if self.q_row_fn is not None:
            return self.q_row_fn(t, i, u, v)
        if self.tables is not None:
            times = self.tables.times
            k = min(max(int(np.searchsorted(times, t, side="right")) - 1, 0),
                    len(times) - 2)
            w = (t - times[k]) / (times[k + 1] - times[k])
            rows = self.tables.q[k:k + 2, u, v, i]
            return rows[0] * (1.0 - w) + rows[1] * w
        return self.q_at(t)[u, v, i]

    def h_path(self, ts: np.ndarray, states: np.ndarray,
               us: np.ndarray, vs: np.ndarray) -> np.ndarray:
        """h(t_k, i_k, u_k, v_k) for parallel index arrays."""
        ts = np.asarray(ts, dtype=np.float64)
        h = self.h_fn(ts)
        return h[np.arange(len(ts)), states, us, vs]


@dataclass(frozen=True)
class Bounds:
    """A-priori constants of the game: coefficient maxima and derived bounds.

    c1 bounds |value|, c2 bounds the slope of the un-projected backward flow,
    c3 bounds the slope of the value itself.
    """

    m_q: float
    m_h: float
    m_g: float
    l_g: float
    c1: float
    c2: float
    c3: float
    d: int
    T: float

    def envelope(self, t) -> np.ndarray:
        """Time-dependent bound (m_g + m_h (T-t)) e^{d m_q (T-t)} on |value|."""
        rem = self.T - np.asarray(t, dtype=np.float64)
        return (self.m_g + self.m_h * rem) * np.exp(self.d * self.m_q * rem)


def compute_bounds(model: GameModel, sampling_resolution: int = 201) -> Bounds:
    """Coefficient maxima and the derived constants c1, c2, c3.

    For tabulated models the maxima are exact (piecewise-linear coefficients
    attain extrema at nodes); closed-form models are sampled on a uniform
    grid of ``sampling_resolution`` points.
    """
    if model.tables is not None:
        q, h, g = model.tables.q, model.tables.h, model.tables.g
    else:
        ts = np.linspace(0.0, model.T, sampling_resolution)
        q, h, g = model.q_fn(ts), model.h_fn(ts), model.g_fn(ts)
    m_q = float(np.max(np.abs(q)))
    m_h = float(np.max(np.abs(h))) if h.size else 0.0
    m_g = float(np.max(np.abs(g)))
    c1 = (m_g + m_h * model.T) * math.exp(model.d * m_q * model.T)
    c2 = model.d * m_q * c1 + m_h
    c3 = max(model.l_g, c2)
    return Bounds(m_q=m_q, m_h=m_h, m_g=m_g, l_g=model.l_g,
                  c1=c1, c2=c2, c3=c3, d=model.d, T=model.T)


def _validate_generator_tables(times, q, tol):
    """Kolmogorov checks on a (K, n_u, n_v, d, d) stack; returns cleaned copy.

    Off-diagonals below -tol or row sums beyond tol raise with the worst
    (t, u, v, i) witness.  Surviving tiny negatives are clipped and the
    diagonal re-adjusted so every row sums to exactly zero.
    """
    q = np.array(q, dtype=np.float64)
    K, n_u, n_v, d, _ = q.shape
    off = q.copy()
    for i in range(d):
        off[..., i, i] = 0.0
    worst = np.unravel_index(np.argmin(off), off.shape)
    if off[worst] < -tol:
        k, u, v, i, j = worst
        raise ModelError(
            f"negative off-diagonal rate Q[{i},{j}]={off[worst]:.3g} at "
            f"t={times[k]:.6g}, u={u}, v={v}")
    rowsum = q.sum(axis=-1)
    worst = np.unravel_index(np.argmax(np.abs(rowsum)), rowsum.shape)
    if abs(rowsum[worst]) > tol:
        k, u, v, i = worst
        raise ModelError(
            f"generator row {i} sums to {rowsum[worst]:.3g} at "
            f"t={times[k]:.6g}, u={u}, v={v}")
    off = np.maximum(off, 0.0)
    for i in range(d):
        off[..., i, i] = 0.0
    diag = -off.sum(axis=-1)
    for i in range(d):
        off[..., i, i] = diag[..., i]
    return off


def model_from_tables(times, q, h, g, actions_u, actions_v, name="",
                      kolmogorov_tol: float = KOLMOGOROV_TOL) -> GameModel:
    """Build a validated model from tabulated coefficients."""
    times = np.array(times, dtype=np.float64)
    if times.ndim != 1 or len(times) < 2:
        raise ModelError("grid_times must hold at least two times")
    if np.any(np.diff(times) <= 0):
        raise ModelError("grid_times must be strictly increasing")
    if times[0] != 0.0:
        raise ModelError("grid_times must start at 0")
    T = float(times[-1])
    if T <= 0:
        raise ModelError("horizon T must be positive")
    q = np.asarray(q, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    for arr, label in ((q, "Q"), (h, "h"), (g, "g")):
        if not np.all(np.isfinite(arr)):
            raise ModelError(f"non-finite entries in {label}")
    K = len(times)
    n_u, n_v = len(actions_u), len(actions_v)
    d = g.shape[1] if g.ndim == 2 else 0
    if q.shape != (K, n_u, n_v, d, d):
        raise ModelError(f"Q has shape {q.shape}, expected {(K, n_u, n_v, d, d)}")
    if h.shape != (K, d, n_u, n_v):
        raise ModelError(f"h has shape {h.shape}, expected {(K, d, n_u, n_v)}")
    if g.shape != (K, d):
        raise ModelError(f"g has shape {g.shape}, expected {(K, d)}")
    q = _validate_generator_tables(times, q, kolmogorov_tol)
    slopes = np.abs(np.diff(g, axis=0)) / np.diff(times)[:, None]
    l_g = float(np.max(slopes)) if slopes.size else 0.0
    tab = Tables(times=times, q=q, h=h, g=g)
    return GameModel(
        d=d, T=T, actions_u=tuple(actions_u), actions_v=tuple(actions_v),
        q_fn=lambda ts, _t=times, _q=q: interp_table(_t, _q, ts),
        h_fn=lambda ts, _t=times, _h=h: interp_table(_t, _h, ts),
        g_fn=lambda ts, _t=times, _g=g: interp_table(_t, _g, ts),
        l_g=l_g, name=name, tables=tab)


def load_model(source) -> GameModel:
    """Load a model from a JSON document (path, JSON string, or dict).

    Schema: either ``{"builtin": <name>}`` or the tabulated form with keys
    ``d``, ``T``, ``actions_u``, ``actions_v``, ``grid_times``, ``Q``
    (indexed [time][u][v][i][j]), ``h`` ([time][i][u][v]), ``g`` ([time][i]).
    """
    if isinstance(source, dict):
        doc = source
    else:
        text = None
        try:
            with open(source, "r", encoding="utf-8") as f:
                text = f.read()
        except (OSError, TypeError):
            text = source
        try:
            doc = json.loads(text)
        except (json.JSONDecodeError, TypeError) as exc:
            raise ModelError(f"cannot parse model document: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")

    if "builtin" in doc:
        from . import demos
        return demos.builtin_model(doc["builtin"])

    required = {"d", "T", "actions_u", "actions_v", "grid_times", "Q", "h", "g"}
    missing = required - set(doc)
    if missing:
        raise ModelError(f"missing keys: {sorted(missing)}")
    d = doc["d"]
    if not isinstance(d, int) or d < 1:
        raise ModelError("d must be a positive integer")
    model = model_from_tables(
        doc["grid_times"], doc["Q"], doc["h"], doc["g"],
        doc["actions_u"], doc["actions_v"], name=str(doc.get("name", "")))
    if model.d != d:
        raise ModelError(f"d={d} does not match g state dimension {model.d}")
    if abs(model.T - float(doc["T"])) > 0:
        raise ModelError(f"T={doc['T']} does not match last grid time {model.T}")
    return model


def model_to_dict(model: GameModel) -> dict:
    """Tabulated JSON-ready representation (tabulates builtins if needed)."""
    if model.tables is not None:
        tab = model.tables
    else:
        ts = np.linspace(0.0, model.T, 2001)
        tab = Tables(times=ts, q=model.q_fn(ts), h=model.h_fn(ts),
                     g=model.g_fn(ts))
    return {
        "name": model.name,
        "d": model.d,
        "T": model.T,
        "actions_u": list(model.actions_u),
        "actions_v": list(model.actions_v),
        "grid_times": tab.times.tolist(),
        "Q": tab.q.tolist(),
        "h": tab.h.tolist(),
        "g": tab.g.tolist(),
    }


def generate_random_model(d: int, n_u: int, n_v: int, T: float,
                          seed: int) -> GameModel:
    """Reproducible random tabulated instance with a valid generator."""
    if min(d, n_u, n_v) < 1:
        raise ModelError("d, n_u, n_v must be >= 1")
    rng = np.random.default_rng(seed)
    K = 5
    times = np.linspace(0.0, T, K)
    q = rng.uniform(0.0, 2.0, size=(K, n_u, n_v, d, d))
    for i in range(d):
        q[..., i, i] = 0.0
        q[..., i, i] = -q[..., i, :].sum(axis=-1)
    h = rng.uniform(-1.0, 1.0, size=(K, d, n_u, n_v))
    g = rng.uniform(-1.0, 1.0, size=(K, d))
    return model_from_tables(times, q, h, g, list(range(n_u)),
                             list(range(n_v)), name=f"random-{seed}")
