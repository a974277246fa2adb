"""Shipped analytic demo instances.

Four builtins: `const_g` (constant obstacle, value identically g),
`one_state_parabola` (pure stopping in one state), `two_state_game`
(controlled rates on both sides, separable costs so the minimax gap is zero),
and `unconstrained` (no controls, obstacle lifted clear of the free backward
solution).
"""

from __future__ import annotations

import numpy as np

from .model import GameModel, ModelError


def _as_times(ts):
    return np.atleast_1d(np.asarray(ts, dtype=np.float64))


# const_g ---------------------------------------------------------------

def _const_q(ts):
    ts = _as_times(ts)
    q = np.empty((len(ts), 1, 1, 2, 2))
    q[:, 0, 0] = np.array([[-1.0, 1.0], [1.0, -1.0]])
    return q


def _const_h(ts):
    ts = _as_times(ts)
    return np.zeros((len(ts), 2, 1, 1))


def _const_g_pay(ts):
    ts = _as_times(ts)
    return np.ones((len(ts), 2))


_CONST_Q = np.array([[-1.0, 1.0], [1.0, -1.0]])


def _const_q_row(t, i, u, v):
    return _CONST_Q[i]


# one_state_parabola ----------------------------------------------------

def _para_q(ts):
    ts = _as_times(ts)
    return np.zeros((len(ts), 1, 1, 1, 1))


def _para_h(ts):
    ts = _as_times(ts)
    return np.zeros((len(ts), 1, 1, 1))


def _para_g(ts):
    ts = _as_times(ts)
    return ((ts - 0.5) ** 2)[:, None]


# two_state_game --------------------------------------------------------
#
# Q_{01} = (1+u+v) rho(t), Q_{10} = (1 + u/2 + 3v/2) rho(t) with
# rho(t) = 1 + t/4; h is separable in (u, v), so min-max equals max-min
# exactly for every (t, i, w).

def _tsg_rho(ts):
    return 1.0 + 0.25 * ts


def _tsg_q(ts):
    ts = _as_times(ts)
    rho = _tsg_rho(ts)
    q = np.empty((len(ts), 2, 2, 2, 2))
    for u in (0, 1):
        for v in (0, 1):
            r01 = (1.0 + u + v) * rho
            r10 = (1.0 + 0.5 * u + 1.5 * v) * rho
            q[:, u, v, 0, 0] = -r01
            q[:, u, v, 0, 1] = r01
            q[:, u, v, 1, 0] = r10
            q[:, u, v, 1, 1] = -r10
    return q


def _tsg_q_row(t, i, u, v):
    rho = 1.0 + 0.25 * t
    if i == 0:
        r = (1.0 + u + v) * rho
        return np.array([-r, r])
    r = (1.0 + 0.5 * u + 1.5 * v) * rho
    return np.array([r, -r])


def _tsg_h(ts):
    ts = _as_times(ts)
    h = np.empty((len(ts), 2, 2, 2))
    for u in (0, 1):
        for v in (0, 1):
            h[:, 0, u, v] = u - v + 0.3 * np.cos(2.0 * ts)
            h[:, 1, u, v] = v - u - 0.2
    return h


def _tsg_g(ts):
    # dips below the free backward solution mid-horizon, so the obstacle
    # binds on an interior region and the stopping decision is non-trivial
    ts = _as_times(ts)
    g = np.empty((len(ts), 2))
    g[:, 0] = 0.10 + 0.6 * (ts - 0.5) ** 2
    g[:, 1] = 0.06 + 0.8 * (ts - 0.65) ** 2
    return g


# unconstrained ---------------------------------------------------------
#
# Single action per player; g(T) matches the free terminal data and grows
# linearly backward with slope 10, which dominates |dpsi/dt| <= d m_q max|psi|
# + m_h <= 7, so the obstacle never binds before T.

_UNC_TERMINAL = np.array([0.5, -0.2])


def _unc_q(ts):
    ts = _as_times(ts)
    base = np.array([[-1.0, 1.0], [2.0, -2.0]])
    scale = 1.0 + 0.5 * ts
    return base[None, None, None] * scale[:, None, None, None, None]


def _unc_q_row(t, i, u, v):
    base = np.array([[-1.0, 1.0], [2.0, -2.0]])
    return base[i] * (1.0 + 0.5 * t)


_PARA_ROW = np.zeros(1)


def _para_q_row(t, i, u, v):
    return _PARA_ROW


def _unc_h(ts):
    ts = _as_times(ts)
    h = np.empty((len(ts), 2, 1, 1))
    h[:, 0, 0, 0] = np.sin(np.pi * ts)
    h[:, 1, 0, 0] = 0.5 * np.cos(np.pi * ts)
    return h


def _unc_g(ts):
    ts = _as_times(ts)
    return _UNC_TERMINAL[None, :] + 10.0 * (1.0 - ts)[:, None]


BUILTIN_NAMES = ("const_g", "one_state_parabola", "two_state_game",
                 "unconstrained")


def builtin_model(name: str) -> GameModel:
    """Return a shipped closed-form instance by name."""
    if name == "const_g":
        return GameModel(d=2, T=1.0, actions_u=(0,), actions_v=(0,),
                         q_fn=_const_q, h_fn=_const_h, g_fn=_const_g_pay,
                         l_g=0.0, name=name, q_row_fn=_const_q_row)
    if name == "one_state_parabola":
        return GameModel(d=1, T=1.0, actions_u=(0,), actions_v=(0,),
                         q_fn=_para_q, h_fn=_para_h, g_fn=_para_g,
                         l_g=1.0, name=name, q_row_fn=_para_q_row)
    if name == "two_state_game":
        return GameModel(d=2, T=1.0, actions_u=(0, 1), actions_v=(0, 1),
                         q_fn=_tsg_q, h_fn=_tsg_h, g_fn=_tsg_g,
                         l_g=1.04, name=name, q_row_fn=_tsg_q_row)
    if name == "unconstrained":
        return GameModel(d=2, T=1.0, actions_u=(0,), actions_v=(0,),
                         q_fn=_unc_q, h_fn=_unc_h, g_fn=_unc_g,
                         l_g=10.0, name=name, q_row_fn=_unc_q_row)
    raise ModelError(f"unknown builtin {name!r}; "
                     f"available: {', '.join(BUILTIN_NAMES)}")
