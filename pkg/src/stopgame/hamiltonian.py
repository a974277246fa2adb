"""Upper/lower Hamiltonians by exhaustive enumeration over the action sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GameModel

GAP_TOL = 1e-12


@dataclass(frozen=True)
class HamiltonianResult:
    value: float          # min_u max_v of the bracket
    argmin_u: int
    inner_argmax_v: int   # maximizer inside the chosen row
    lower_value: float    # max_v min_u
    argmax_v: int
    isaacs_gap: float     # value - lower_value, >= 0


def bracket_matrix(model: GameModel, t: float, i: int, w: np.ndarray) -> np.ndarray:
    """(n_u, n_v) matrix of Q_i(t,u,v) . w + h(t,i,u,v)."""
    q = model.q_at(t)   # (n_u, n_v, d, d)
    h = model.h_at(t)   # (d, n_u, n_v)
    return q[:, :, i, :] @ w + h[i]


def eval_hamiltonian(model: GameModel, t: float, i: int,
                     w: np.ndarray) -> HamiltonianResult:
    """Upper and lower Hamiltonian values at (t, i, w), with optimizers.

    Ties in every arg-operation break toward the lowest action index.
    """
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite w")
    br = bracket_matrix(model, t, i, w)
    row_max = br.max(axis=1)
    u_star = int(np.argmin(row_max))
    v_inner = int(np.argmax(br[u_star]))
    col_min = br.min(axis=0)
    v_star = int(np.argmax(col_min))
    value = float(row_max[u_star])
    lower = float(col_min[v_star])
    return HamiltonianResult(value=value, argmin_u=u_star,
                             inner_argmax_v=v_inner, lower_value=lower,
                             argmax_v=v_star, isaacs_gap=value - lower)


def isaacs_audit(model: GameModel, time_samples: np.ndarray,
                 w_samples: np.ndarray):
    """Max min-max/max-min gap over a sample set, with its witness.

    Returns (max_gap, (t, i, w)) over all (t, i, w) combinations in
    ``time_samples`` x states x ``w_samples``.
    """
    time_samples = np.atleast_1d(np.asarray(time_samples, dtype=np.float64))
    w_samples = np.atleast_2d(np.asarray(w_samples, dtype=np.float64))
    max_gap = -np.inf
    witness = None
    for t in time_samples:
        for w in w_samples:
            for i in range(model.d):
                res = eval_hamiltonian(model, float(t), i, w)
                if res.isaacs_gap > max_gap:
                    max_gap = res.isaacs_gap
                    witness = (float(t), i, w.copy())
    return float(max_gap), witness
