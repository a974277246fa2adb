"""Path simulation of the controlled jump process and Monte Carlo checks.

Jumps are sampled exactly by thinning: candidate events arrive at a constant
dominating rate and are accepted with probability Q_{ij}/rate, so no
time-discretization bias enters the sampler.  Per-path random streams come
from counter-based Philox keys (seed, path index), which makes every report
reproducible and the path loop embarrassingly parallel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import Bounds, GameModel, compute_bounds
from .solver import ValueGrid
from .strategy import PolicyTable, StoppingRule

THINNING_SLACK = 1.05
CI_MULTIPLIER = 1.96


def path_rng(seed: int, path_id: int) -> np.random.Generator:
    """Independent counter-based stream for one path."""
    key = np.array([seed, path_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class HistoryPolicy:
    """Strategy with memory: the decision sees only the path prefix.

    ``decide(t, jump_times, jump_states) -> action`` receives the jump
    record up to time t (first entry is the initial condition).  An optional
    ``decide_many`` vectorizes over an array of times for the same fixed
    path prefix; it is used for cost quadrature.
    """

    side: str
    decide: Callable
    decide_many: Callable | None = None


@dataclass(frozen=True)
class Trajectory:
    """One simulated path with its stopping data and accumulated payoff."""

    t0: float
    i0: int
    events: tuple            # ((jump_time, new_state), ...)
    stop_time: float
    stop_state: int
    running_cost: float
    payoff: float
    jump_times: np.ndarray = field(repr=False)   # includes t0
    jump_states: np.ndarray = field(repr=False)  # includes i0

    def states_at(self, ts: np.ndarray) -> np.ndarray:
        """Right-continuous path state at each query time."""
        idx = np.searchsorted(self.jump_times, np.asarray(ts), side="right") - 1
        return self.jump_states[np.clip(idx, 0, len(self.jump_states) - 1)]


@dataclass(frozen=True)
class SimulationReport:
    n_paths: int
    mean: float
    std_error: float
    ci95: tuple
    seed: int


def _decide(policy, t: float, i: int, jt, js) -> int:
    if policy is None:
        return 0
    if isinstance(policy, PolicyTable):
        return policy.action(t, i)
    return int(policy.decide(t, np.asarray(jt), np.asarray(js)))


def _decide_segments(policy, ts: np.ndarray, states: np.ndarray,
                     jump_times: np.ndarray, jump_states: np.ndarray) -> np.ndarray:
    """Actions on quadrature segments (left endpoints ``ts``), vectorized."""
    if policy is None:
        return np.zeros(len(ts), dtype=np.int64)
    if isinstance(policy, PolicyTable):
        return policy.actions[policy.cell_indices(ts), states]
    if policy.decide_many is not None:
        return np.asarray(policy.decide_many(ts, jump_times, jump_states),
                          dtype=np.int64)
    return np.array([policy.decide(t, jump_times[jump_times <= t],
                                   jump_states[:np.sum(jump_times <= t)])
                     for t in ts], dtype=np.int64)


def dominating_rate(model: GameModel, bounds: Bounds | None = None) -> float:
    if bounds is None:
        bounds = compute_bounds(model)
    return THINNING_SLACK * model.d * bounds.m_q


@dataclass(frozen=True)
class SimContext:
    """Per-run precomputation shared by all paths of one estimate.

    When both policies are tables on the quadrature grid, the running-cost
    integrand on each grid cell is path-independent; ``cell_cum`` holds the
    cumulative per-cell trapezoid integrals per state, so the per-path cost
    reduces to partial-cell corrections at candidate times.  The result is
    the same union-of-breakpoints trapezoid rule either way.
    """

    lam: float
    quad_times: np.ndarray   # quadrature skeleton (the rule grid usually)
    h_quad: np.ndarray       # h at the skeleton nodes, (M+1, d, n_u, n_v)
    g_quad: np.ndarray       # g at the skeleton nodes, (M+1, d)
    step: float | None       # uniform skeleton spacing, if uniform
    u_table: np.ndarray | None = None   # (M+1, d) actions
    v_table: np.ndarray | None = None
    cell_cum: np.ndarray | None = None  # (M+1, d): integral of cells < m

    @property
    def fast(self) -> bool:
        return self.cell_cum is not None

    def cell_of(self, t: float) -> int:
        eps = 1e-12 * max(1.0, self.quad_times[-1])
        c = int((t - self.quad_times[0] + eps) / self.step)
        return min(max(c, 0), len(self.quad_times) - 2)


def _policy_table_on(policy, quad_times, d):
    if policy is None:
        return np.zeros((len(quad_times), d), dtype=np.int64)
    if (isinstance(policy, PolicyTable)
            and len(policy.times) == len(quad_times)
            and np.array_equal(policy.times, quad_times)):
        return policy.actions
    return None


def make_context(model: GameModel, rule: StoppingRule | None,
                 policy_u=None, policy_v=None,
                 lam: float | None = None) -> SimContext:
    if lam is None:
        lam = dominating_rate(model)
    quad_times = rule.times if rule is not None else np.linspace(
        0.0, model.T, 257)
    h_quad = model.h_fn(quad_times)
    g_quad = model.g_fn(quad_times)
    dts = np.diff(quad_times)
    step = float(dts[0]) if np.allclose(dts, dts[0]) else None
    ut = _policy_table_on(policy_u, quad_times, model.d)
    vt = _policy_table_on(policy_v, quad_times, model.d)
    cum = None
    if step is not None and ut is not None and vt is not None:
        M = len(quad_times) - 1
        i_idx = np.arange(model.d)[None, :]
        m_idx = np.arange(M)[:, None]
        h_left = h_quad[:-1][m_idx, i_idx, ut[:-1], vt[:-1]]
        h_right = h_quad[1:][m_idx, i_idx, ut[:-1], vt[:-1]]
        cell = 0.5 * (h_left + h_right) * dts[:, None]
        cum = np.vstack([np.zeros((1, model.d)), np.cumsum(cell, axis=0)])
    return SimContext(lam=lam, quad_times=quad_times, h_quad=h_quad,
                      g_quad=g_quad, step=step, u_table=ut, v_table=vt,
                      cell_cum=cum)


def simulate_path(model: GameModel, policy_u, policy_v,
                  rule: StoppingRule | None, t0: float, i0: int,
                  rng: np.random.Generator, lam: float | None = None,
                  ctx: SimContext | None = None) -> Trajectory:
    """Sample one controlled path and its payoff.

    ``rule`` is a StoppingRule evaluated on its grid skeleton, or None for
    the fixed horizon T.  Running cost is a trapezoid quadrature on the
    union of the quadrature skeleton (the rule grid when present), the
    candidate times and the jump times.
    """
    if ctx is None:
        ctx = make_context(model, rule, policy_u, policy_v, lam=lam)
    lam = ctx.lam
    if lam < 0:
        raise ValueError("negative dominating rate")
    T = model.T
    d = model.d

    jt = [t0]
    js = [i0]
    cand = []
    t = t0
    i = i0
    if lam > 0:
        while True:
            t += rng.exponential(1.0 / lam)
            if t >= T:
                break
            cand.append(t)
            u = _decide(policy_u, t, i, jt, js)
            v = _decide(policy_v, t, i, jt, js)
            row = model.q_row(t, i, u, v)
            x = rng.random() * lam
            acc = 0.0
            for j in range(d):
                if j == i:
                    continue
                acc += row[j]
                if x < acc:
                    jt.append(t)
                    js.append(j)
                    i = j
                    break

    jump_times = np.array(jt)
    jump_states = np.array(js, dtype=np.int64)
    quad_times = ctx.quad_times

    # stopping on the grid skeleton
    if rule is not None:
        idx = np.searchsorted(jump_times, rule.times, side="right") - 1
        states_nodes = jump_states[np.clip(idx, 0, len(jump_states) - 1)]
        eps = 1e-12 * max(1.0, T)
        m0 = int(np.searchsorted(rule.times, t0 - eps))
        fired = rule.indicator[np.arange(m0, len(rule.times)),
                               states_nodes[m0:]].nonzero()[0]
        m_stop = m0 + fired[0] if len(fired) else len(rule.times) - 1
        stop_time = float(rule.times[m_stop]) if len(fired) else T
    else:
        m_stop = len(quad_times) - 1
        stop_time = T

    keep = jump_times <= stop_time
    jump_times = jump_times[keep]
    jump_states = jump_states[keep]
    stop_state = int(jump_states[-1])

    # running cost: per-segment trapezoid with segment-constant state/action
    if ctx.fast:
        # cell totals are precomputed; only partial cells at the breaks
        # (state changes happen at candidate times only) are evaluated here
        ts_x = np.array([t0] + [c for c in cand if c < stop_time]
                        + [stop_time])
        sx = np.searchsorted(jump_times, ts_x, side="right") - 1
        states_x = jump_states[np.clip(sx, 0, len(jump_states) - 1)]
        h_x = model.h_fn(ts_x)
        U, V, C = ctx.u_table, ctx.v_table, ctx.cell_cum
        cost = 0.0
        for k in range(len(ts_x) - 1):
            a = ts_x[k]
            b = ts_x[k + 1]
            i = int(states_x[k])
            ca = ctx.cell_of(a)
            cb = ctx.cell_of(b)
            if ca == cb:
                u = U[ca, i]
                v = V[ca, i]
                cost += 0.5 * (h_x[k, i, u, v] + h_x[k + 1, i, u, v]) * (b - a)
            else:
                u = U[ca, i]
                v = V[ca, i]
                cost += 0.5 * (h_x[k, i, u, v] + ctx.h_quad[ca + 1, i, u, v]) \
                    * (quad_times[ca + 1] - a)
                cost += C[cb, i] - C[ca + 1, i]
                u = U[cb, i]
                v = V[cb, i]
                cost += 0.5 * (ctx.h_quad[cb, i, u, v] + h_x[k + 1, i, u, v]) \
                    * (b - quad_times[cb])
        running_cost = float(cost)
    else:
        lo = int(np.searchsorted(quad_times, t0, side="right"))
        hi = int(np.searchsorted(quad_times, stop_time, side="left"))
        extras = np.array([t0, stop_time]
                          + [t for t in jt[1:] if t <= stop_time]
                          + [c for c in cand if c < stop_time])
        ts_b = np.concatenate([quad_times[lo:hi], extras])
        h_rows = np.concatenate([ctx.h_quad[lo:hi], model.h_fn(extras)],
                                axis=0)
        order = np.argsort(ts_b, kind="stable")
        ts_b = ts_b[order]
        h_rows = h_rows[order]
        lefts = ts_b[:-1]
        seg_idx = np.searchsorted(jump_times, lefts, side="right") - 1
        seg_states = jump_states[np.clip(seg_idx, 0, len(jump_states) - 1)]
        us = _decide_segments(policy_u, lefts, seg_states, jump_times,
                              jump_states)
        vs = _decide_segments(policy_v, lefts, seg_states, jump_times,
                              jump_states)
        f_left = h_rows[np.arange(len(lefts)), seg_states, us, vs]
        f_right = h_rows[np.arange(1, len(ts_b)), seg_states, us, vs]
        running_cost = float(np.sum(0.5 * (f_left + f_right) * np.diff(ts_b)))

    payoff = float(ctx.g_quad[m_stop, stop_state]) + running_cost
    events = tuple(zip(jump_times[1:].tolist(), jump_states[1:].tolist()))
    return Trajectory(t0=t0, i0=i0, events=events, stop_time=stop_time,
                      stop_state=stop_state, running_cost=running_cost,
                      payoff=payoff, jump_times=jump_times,
                      jump_states=jump_states)


def sample_paths(model: GameModel, policy_u, policy_v, rule, t0, i0,
                 n_paths: int, seed: int, threads: int = 1):
    """List of trajectories under per-path Philox streams."""
    ctx = make_context(model, rule, policy_u, policy_v)

    def one(p: int) -> Trajectory:
        return simulate_path(model, policy_u, policy_v, rule, t0, i0,
                             path_rng(seed, p), ctx=ctx)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(one, range(n_paths)))
    return [one(p) for p in range(n_paths)]


def estimate_value(model: GameModel, policy_u, policy_v, rule, t0: float,
                   i0: int, n_paths: int, seed: int,
                   threads: int = 1) -> SimulationReport:
    """Monte Carlo estimate of the expected payoff."""
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    trajs = sample_paths(model, policy_u, policy_v, rule, t0, i0, n_paths,
                         seed, threads=threads)
    payoffs = np.array([tr.payoff for tr in trajs])
    mean = float(payoffs.mean())
    se = float(payoffs.std(ddof=1) / np.sqrt(n_paths))
    return SimulationReport(
        n_paths=n_paths, mean=mean, std_error=se,
        ci95=(mean - CI_MULTIPLIER * se, mean + CI_MULTIPLIER * se),
        seed=seed)


# saddle-point probing --------------------------------------------------

@dataclass(frozen=True)
class ProbeResult:
    side: str      # "minimizer-fixed" (bound from above) | "maximizer-fixed"
    kind: str      # deviation type
    mean: float
    std_error: float
    bound: float
    ok: bool


@dataclass(frozen=True)
class SaddleReport:
    value: float
    tol_scheme: float
    probes: tuple

    @property
    def all_ok(self) -> bool:
        return all(p.ok for p in self.probes)


def _parity_policy(side: str, n_actions: int, base: int) -> HistoryPolicy:
    """Switches action with the parity of the jump count (memory probe)."""

    def decide(t, jump_times, jump_states):
        return (base + len(jump_times) - 1) % n_actions

    def decide_many(ts, jump_times, jump_states):
        counts = np.searchsorted(jump_times[1:], ts, side="right")
        return (base + counts) % n_actions

    return HistoryPolicy(side=side, decide=decide, decide_many=decide_many)


def _random_feedback(times, d, n_actions, side, rng) -> PolicyTable:
    actions = rng.integers(0, n_actions, size=(len(times), d))
    return PolicyTable(times=times, actions=actions.astype(np.int64), side=side)


def _random_rule(times, d, t0, rng) -> StoppingRule:
    """Per-state threshold stopping rule with a random onset time."""
    theta = rng.uniform(t0, times[-1], size=d)
    ind = (times[:, None] >= theta[None, :]).astype(np.uint8)
    ind[-1, :] = 1
    return StoppingRule(times=times, indicator=ind)


def saddle_check(model: GameModel, grid: ValueGrid, n_deviations: int,
                 n_paths: int, seed: int, t0: float = 0.0, i0: int = 0,
                 tol_scheme: float = 0.0, threads: int = 1) -> SaddleReport:
    """Probe both saddle inequalities with random adversaries.

    (a) the extracted minimizer policy and stopping rule against random
    maximizer deviations must not pay more than the computed value;
    (b) random minimizer policies and stopping rules against the extracted
    maximizer policy must not pay less.  Tolerance: 3 standard errors plus
    the scheme defect ``tol_scheme``.
    """
    from .strategy import (extract_max_policy, extract_min_policy,
                           extract_stopping_rule)

    u_hat = extract_min_policy(grid, model)
    v_tilde = extract_max_policy(grid, model)
    rule_hat = extract_stopping_rule(grid, model)
    m0 = grid.node_at_or_after(t0)
    value = float(grid.values[m0, i0])
    rng = np.random.default_rng(seed)
    probes = []

    for k in range(n_deviations):
        if k % 2 == 0:
            beta = _random_feedback(grid.times, model.d, model.n_v, "max", rng)
            kind = "feedback"
        else:
            beta = _parity_policy("max", model.n_v, base=k % model.n_v)
            kind = "history-parity"
        rep = estimate_value(model, u_hat, beta, rule_hat, t0, i0, n_paths,
                             seed + 1000003 * (k + 1), threads=threads)
        bound = value + 3.0 * rep.std_error + tol_scheme
        probes.append(ProbeResult(side="minimizer-fixed", kind=kind,
                                  mean=rep.mean, std_error=rep.std_error,
                                  bound=bound, ok=rep.mean <= bound))

    for k in range(n_deviations):
        if k % 2 == 0:
            alpha = _random_feedback(grid.times, model.d, model.n_u, "min", rng)
            kind = "feedback"
        else:
            alpha = _parity_policy("min", model.n_u, base=k % model.n_u)
            kind = "history-parity"
        tau = _random_rule(grid.times, model.d, t0, rng)
        rep = estimate_value(model, alpha, v_tilde, tau, t0, i0, n_paths,
                             seed + 2000003 * (k + 1), threads=threads)
        bound = value - 3.0 * rep.std_error - tol_scheme
        probes.append(ProbeResult(side="maximizer-fixed", kind=kind,
                                  mean=rep.mean, std_error=rep.std_error,
                                  bound=bound, ok=rep.mean >= bound))

    return SaddleReport(value=value, tol_scheme=tol_scheme,
                        probes=tuple(probes))


# martingale diagnostic -------------------------------------------------

@dataclass(frozen=True)
class MartingaleReport:
    checkpoints: np.ndarray
    increment_means: np.ndarray   # per consecutive checkpoint pair
    increment_ses: np.ndarray
    max_abs_mean: float
    se_at_max: float


def martingale_residual(model: GameModel, policy_u, policy_v,
                        test_fn, test_fn_dt, t0: float, i0: int,
                        checkpoints, n_paths: int, seed: int,
                        quad_nodes: int = 65) -> MartingaleReport:
    """Monte Carlo check of the compensated-process martingale property.

    ``test_fn(t, i)`` and its time derivative ``test_fn_dt(t, i)`` must be
    vectorized over broadcastable arrays.  For each pair of consecutive
    checkpoints the sample average of the compensated increment is returned;
    under a correct sampler every average is within statistical noise of 0.
    """
    checkpoints = np.asarray(checkpoints, dtype=np.float64)
    if len(checkpoints) < 2:
        raise ValueError("need at least two checkpoints")
    ctx = make_context(model, None)
    base_grid = np.union1d(np.linspace(t0, model.T, quad_nodes), checkpoints)
    states = np.arange(model.d)
    n_pairs = len(checkpoints) - 1
    sums = np.zeros(n_pairs)
    sumsq = np.zeros(n_pairs)

    for p in range(n_paths):
        tr = simulate_path(model, policy_u, policy_v, None, t0, i0,
                           path_rng(seed, p), ctx=ctx)
        ts_b = np.union1d(base_grid, tr.jump_times)
        lefts = ts_b[:-1]
        seg_states = tr.states_at(lefts)
        us = _decide_segments(policy_u, lefts, seg_states, tr.jump_times,
                              tr.jump_states)
        vs = _decide_segments(policy_v, lefts, seg_states, tr.jump_times,
                              tr.jump_states)
        f_b = np.asarray(test_fn(ts_b[:, None], states[None, :]),
                         dtype=np.float64)            # (B, d)
        ft_b = np.asarray(test_fn_dt(ts_b[:, None], states[None, :]),
                          dtype=np.float64)
        q_b = model.q_fn(ts_b)                         # (B, n_u, n_v, d, d)
        k = np.arange(len(lefts))
        rows_l = q_b[k, us, vs, seg_states]            # (B-1, d)
        rows_r = q_b[k + 1, us, vs, seg_states]
        integ_l = ft_b[k, seg_states] + np.sum(rows_l * f_b[:-1], axis=1)
        integ_r = ft_b[k + 1, seg_states] + np.sum(rows_r * f_b[1:], axis=1)
        seg_int = 0.5 * (integ_l + integ_r) * np.diff(ts_b)
        cum = np.concatenate([[0.0], np.cumsum(seg_int)])
        ci = np.searchsorted(ts_b, checkpoints)
        m_at = (f_b[ci, tr.states_at(checkpoints)] - cum[ci])
        inc = np.diff(m_at)
        sums += inc
        sumsq += inc * inc

    means = sums / n_paths
    var = np.maximum(sumsq / n_paths - means ** 2, 0.0)
    ses = np.sqrt(var / n_paths)
    kmax = int(np.argmax(np.abs(means)))
    return MartingaleReport(checkpoints=checkpoints, increment_means=means,
                            increment_ses=ses,
                            max_abs_mean=float(np.abs(means[kmax])),
                            se_at_max=float(ses[kmax]))
