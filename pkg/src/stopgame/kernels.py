"""Hot numeric kernels: the backward obstacle sweep, in numba and pure numpy.

Backend selection: environment variable ``STOPGAME_BACKEND`` set to ``numba``
or ``numpy``; unset means numba when importable, numpy otherwise.  Both
backends produce bitwise-comparable results up to floating reassociation
(in practice they agree to ~1e-15; tests pin this).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def backend_name() -> str:
    choice = os.environ.get("STOPGAME_BACKEND", "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("STOPGAME_BACKEND=numba but numba is not installed")
        return "numba"
    return "numba" if HAVE_NUMBA else "numpy"


def ham_values(q: np.ndarray, h: np.ndarray, w: np.ndarray) -> np.ndarray:
    """min_u max_v [Q_i . w + h_i] for every state, vectorized.

    q: (n_u, n_v, d, d), h: (d, n_u, n_v), w: (d,) -> (d,)
    """
    br = np.moveaxis(q @ w, -1, 0) + h   # (d, n_u, n_v)
    return br.max(axis=2).min(axis=1)


def backward_sweep_numpy(q_half, h_half, g_nodes, n_outer, substeps, dt):
    """Backward RK4 sweep with obstacle projection at every substep node.

    q_half/h_half are coefficient stacks at the 2M+1 half-step times
    (index 2m is node m); g_nodes is (M+1, d).  Within each outer interval
    the un-projected psi evolves by dpsi/dt = -H(t, psi); the interval is
    seeded from the projected value at its right endpoint.  Returns
    (values, psi_values), both (M+1, d).
    """
    M = n_outer * substeps
    d = g_nodes.shape[1]
    values = np.empty((M + 1, d))
    psi_values = np.empty((M + 1, d))
    values[M] = g_nodes[M]
    psi_values[M] = g_nodes[M]
    psi = g_nodes[M].copy()
    for m in range(M, 0, -1):
        if m % substeps == 0:
            psi = values[m].copy()
        h1 = ham_values(q_half[2 * m], h_half[2 * m], psi)
        h2 = ham_values(q_half[2 * m - 1], h_half[2 * m - 1], psi + 0.5 * dt * h1)
        h3 = ham_values(q_half[2 * m - 1], h_half[2 * m - 1], psi + 0.5 * dt * h2)
        h4 = ham_values(q_half[2 * m - 2], h_half[2 * m - 2], psi + dt * h3)
        psi = psi + (dt / 6.0) * (h1 + 2.0 * h2 + 2.0 * h3 + h4)
        if not np.all(np.isfinite(psi)):
            raise FloatingPointError(
                f"non-finite state in backward sweep at interval "
                f"{(m - 1) // substeps}, substep {(m - 1) % substeps}")
        psi_values[m - 1] = psi
        values[m - 1] = np.minimum(psi, g_nodes[m - 1])
    return values, psi_values


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _ham_values_nb(q, h, w, out):
        d = w.shape[0]
        n_u = q.shape[0]
        n_v = q.shape[1]
        for i in range(d):
            best = np.inf
            for u in range(n_u):
                worst = -np.inf
                for v in range(n_v):
                    acc = h[i, u, v]
                    for j in range(d):
                        acc += q[u, v, i, j] * w[j]
                    if acc > worst:
                        worst = acc
                if worst < best:
                    best = worst
            out[i] = best

    @numba.njit(cache=True)
    def _backward_sweep_nb(q_half, h_half, g_nodes, n_outer, substeps, dt):
        M = n_outer * substeps
        d = g_nodes.shape[1]
        values = np.empty((M + 1, d))
        psi_values = np.empty((M + 1, d))
        ok = True
        values[M] = g_nodes[M]
        psi_values[M] = g_nodes[M]
        psi = g_nodes[M].copy()
        h1 = np.empty(d)
        h2 = np.empty(d)
        h3 = np.empty(d)
        h4 = np.empty(d)
        for m in range(M, 0, -1):
            if m % substeps == 0:
                psi = values[m].copy()
            _ham_values_nb(q_half[2 * m], h_half[2 * m], psi, h1)
            _ham_values_nb(q_half[2 * m - 1], h_half[2 * m - 1],
                           psi + 0.5 * dt * h1, h2)
            _ham_values_nb(q_half[2 * m - 1], h_half[2 * m - 1],
                           psi + 0.5 * dt * h2, h3)
            _ham_values_nb(q_half[2 * m - 2], h_half[2 * m - 2],
                           psi + dt * h3, h4)
            psi = psi + (dt / 6.0) * (h1 + 2.0 * h2 + 2.0 * h3 + h4)
            for i in range(d):
                if not np.isfinite(psi[i]):
                    ok = False
                psi_values[m - 1, i] = psi[i]
                g = g_nodes[m - 1, i]
                values[m - 1, i] = psi[i] if psi[i] < g else g
            if not ok:
                break
        return values, psi_values, ok

    def backward_sweep_numba(q_half, h_half, g_nodes, n_outer, substeps, dt):
        values, psi_values, ok = _backward_sweep_nb(
            np.ascontiguousarray(q_half), np.ascontiguousarray(h_half),
            np.ascontiguousarray(g_nodes), n_outer, substeps, dt)
        if not ok:
            raise FloatingPointError("non-finite state in backward sweep")
        return values, psi_values


def backward_sweep(q_half, h_half, g_nodes, n_outer, substeps, dt):
    """Dispatch to the configured backend."""
    if backend_name() == "numba":
        return backward_sweep_numba(q_half, h_half, g_nodes, n_outer,
                                    substeps, dt)
    return backward_sweep_numpy(q_half, h_half, g_nodes, n_outer, substeps, dt)
