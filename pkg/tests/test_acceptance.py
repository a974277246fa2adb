"""End-to-end acceptance gate: eleven numbered criteria, one test each.

Every test asserts both its numerical tolerance and a wall-clock budget;
``pytest -v`` therefore prints one pass/fail line per criterion.  Oracles are
implemented independently inside this module (dense minimization, a separate
reference ODE integrator, closed-form transition probabilities) rather than by
re-calling the code under test.
"""

import json
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy import stats

from stopgame.cli import EXIT_OK, main
from stopgame.demos import BUILTIN_NAMES, builtin_model
from stopgame.hamiltonian import eval_hamiltonian
from stopgame.model import compute_bounds, model_from_tables
from stopgame.simulator import (estimate_value, martingale_residual, path_rng,
                                saddle_check, sample_paths, simulate_path)
from stopgame.solver import convergence_study, solve_zachrisson
from stopgame.strategy import (extract_max_policy, extract_min_policy,
                               extract_stopping_rule)


@contextmanager
def _budget(seconds):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, f"runtime {elapsed:.2f}s exceeds {seconds}s"


def test_criterion_01_structural_invariants():
    # terminal condition and obstacle bound hold exactly, and the stored
    # value is exactly the min of the un-projected flow and the obstacle
    with _budget(1.0):
        for name in BUILTIN_NAMES:
            m = builtin_model(name)
            grid = solve_zachrisson(m, 200, substeps=8)
            assert float(np.max(np.abs(grid.values[-1] - grid.g[-1]))) == 0.0
            assert float(max(0.0, np.max(grid.values - grid.g))) == 0.0
            assert np.array_equal(grid.values,
                                  np.minimum(grid.psi_values, grid.g))


def test_criterion_02_single_state_stopping_oracle():
    # with no dynamics and no running cost the value is the future minimum
    # of the obstacle; the oracle is a dense suffix minimization
    with _budget(2.0):
        m = builtin_model("one_state_parabola")
        grid = solve_zachrisson(m, 2000, substeps=4)
        ts = np.linspace(0.0, 1.0, 100001)
        dense = (ts - 0.5) ** 2
        suffix = np.minimum.accumulate(dense[::-1])[::-1]
        oracle = suffix[np.searchsorted(ts, grid.times - 1e-12)]
        err = float(np.max(np.abs(grid.values[:, 0] - oracle)))
        assert err <= 1e-3, f"sup error {err:.2e}"


def test_criterion_03_unconstrained_reference_ode():
    # obstacle lifted clear of the solution: the scheme must match a plain
    # linear backward ODE solve; reference integrator written from scratch
    # here at 10x resolution
    with _budget(2.0):
        m = builtin_model("unconstrained")
        grid = solve_zachrisson(m, 400, substeps=8)
        steps = 400 * 8 * 10
        dt = m.T / steps
        half = np.linspace(0.0, m.T, 2 * steps + 1)
        q = m.q_fn(half)[:, 0, 0]
        h = m.h_fn(half)[:, :, 0, 0]
        w = m.g_at(m.T).copy()
        ref = np.empty((steps + 1, m.d))
        ref[steps] = w
        for k in range(steps, 0, -1):
            f1 = q[2 * k] @ w + h[2 * k]
            f2 = q[2 * k - 1] @ (w + 0.5 * dt * f1) + h[2 * k - 1]
            f3 = q[2 * k - 1] @ (w + 0.5 * dt * f2) + h[2 * k - 1]
            f4 = q[2 * k - 2] @ (w + dt * f3) + h[2 * k - 2]
            w = w + (dt / 6.0) * (f1 + 2 * f2 + 2 * f3 + f4)
            ref[k - 1] = w
        err = float(np.max(np.abs(grid.values - ref[::10])))
        assert err <= 1e-4, f"sup error {err:.2e}"


def test_criterion_04_convergence_order():
    # halving the outer step should shrink the defect at a first-order-like
    # rate; the ratio window tolerates the moving binding boundary
    with _budget(10.0):
        m = builtin_model("two_state_game")
        out = convergence_study(m, [100, 200, 400], substeps=8)
        ratio = out[0][2] / out[1][2]
        assert 1.4 <= ratio <= 4.5, (
            f"diff(100,200)={out[0][2]:.3e}, diff(200,400)={out[1][2]:.3e}, "
            f"ratio {ratio:.2f}")


def test_criterion_05_a_priori_bounds():
    # the value stays inside the exponential envelope and its discrete
    # slopes inside the derived slope constant, up to one step of slack
    with _budget(5.0):
        for name in BUILTIN_NAMES:
            m = builtin_model(name)
            b = compute_bounds(m)
            grid = solve_zachrisson(m, 200, substeps=8)
            step = grid.step
            env = b.envelope(grid.times)[:, None] + 10.0 * b.c2 * step
            assert np.all(np.abs(grid.values) <= env), name
            slopes = np.abs(np.diff(grid.values, axis=0)) / step
            assert np.all(slopes <= b.c3 + b.c2 * step), name


def test_criterion_06_hamiltonian_engine():
    # minimax inequality on random samples, and the Lipschitz-in-w bound
    # with the generator-row constant d * m_q
    with _budget(5.0):
        for name in BUILTIN_NAMES:
            m = builtin_model(name)
            b = compute_bounds(m)
            rng = np.random.default_rng(101)
            for _ in range(1000):
                t = float(rng.uniform(0.0, m.T))
                i = int(rng.integers(0, m.d))
                w1 = rng.normal(size=m.d) * 2.0 * max(1.0, b.c1)
                w2 = rng.normal(size=m.d) * 2.0 * max(1.0, b.c1)
                r1 = eval_hamiltonian(m, t, i, w1)
                scale = max(1.0, abs(r1.value), abs(r1.lower_value))
                assert r1.value >= r1.lower_value - 1e-12 * scale
                r2 = eval_hamiltonian(m, t, i, w2)
                lip = m.d * b.m_q * float(np.max(np.abs(w1 - w2)))
                assert abs(r1.value - r2.value) <= lip + 1e-12 * scale


def test_criterion_07_monte_carlo_value_match(tsg_model, tsg_grids, tsg_diffs):
    # simulated payoff under the extracted strategies and stopping rule
    # reproduces the solver value within noise plus the scheme defect
    grid = tsg_grids[400]
    tol_scheme = 2.0 * tsg_diffs[(200, 400)]
    with _budget(60.0):
        pol_u = extract_min_policy(grid, tsg_model)
        pol_v = extract_max_policy(grid, tsg_model)
        rule = extract_stopping_rule(grid, tsg_model)
        rep = estimate_value(tsg_model, pol_u, pol_v, rule, 0.0, 0,
                             100000, seed=42)
        gap = abs(rep.mean - float(grid.values[0, 0]))
        allowance = 3.0 * rep.std_error + tol_scheme
        assert gap <= allowance, f"|mean - value| = {gap:.2e} > {allowance:.2e}"


def test_criterion_08_saddle_inequalities(tsg_model, tsg_grids, tsg_diffs):
    # no random adversary beats the extracted strategies beyond noise plus
    # the scheme defect, on either side; zero violations allowed
    grid = tsg_grids[400]
    tol_scheme = 2.0 * tsg_diffs[(200, 400)]
    with _budget(120.0):
        rep = saddle_check(tsg_model, grid, n_deviations=20, n_paths=10000,
                           seed=11, tol_scheme=tol_scheme)
        bad = [p for p in rep.probes if not p.ok]
        assert len(rep.probes) == 40
        assert not bad, f"{len(bad)} probe(s) violated a saddle bound: {bad}"


def test_criterion_09_simulator_exactness():
    # symmetric 2-state chain with unit rates: closed-form return
    # probability at t=1, and Exp(1) holding times via a distribution fit
    with _budget(30.0):
        m = builtin_model("const_g")
        trs = sample_paths(m, None, None, None, 0.0, 0, 100000, seed=5)
        frac = np.mean([tr.stop_state == 0 for tr in trs])
        p = 0.5 + 0.5 * np.exp(-2.0)
        se = np.sqrt(p * (1.0 - p) / 100000)
        assert abs(frac - p) <= 3.0 * se, f"{frac:.4f} vs {p:.4f}"

        times = [0.0, 10.0]
        q = np.broadcast_to(np.array([[-1.0, 1.0], [1.0, -1.0]]),
                            (2, 1, 1, 2, 2)).copy()
        hold_model = model_from_tables(times, q, np.zeros((2, 2, 1, 1)),
                                       np.zeros((2, 2)), [0], [0])
        holds = []
        for pid in range(10000):
            tr = simulate_path(hold_model, None, None, None, 0.0, 0,
                               path_rng(9, pid))
            if len(tr.events) >= 1:   # censoring probability e^-10
                holds.append(tr.events[0][0])
        assert len(holds) >= 9990
        res = stats.kstest(holds, "expon")
        assert res.pvalue >= 0.01, f"KS p-value {res.pvalue:.4f}"


def test_criterion_10_martingale_diagnostic():
    # compensated test processes on the constant-rate 2-state chain; the
    # chosen test functions make the compensator quadrature exact, so any
    # drift in the increment means is sampler error
    with _budget(60.0):
        m = builtin_model("const_g")
        cps = np.linspace(0.0, m.T, 6)

        def f1(t, i):
            return np.where(np.asarray(i) == 0, 1.0, 0.0) \
                + 0.0 * np.asarray(t)

        def f1_dt(t, i):
            return np.zeros(np.broadcast(np.asarray(t),
                                         np.asarray(i)).shape)

        def f2(t, i):
            return np.asarray(t) * (2.0 * np.asarray(i) - 1.0)

        def f2_dt(t, i):
            return 2.0 * np.asarray(i) - 1.0 + 0.0 * np.asarray(t)

        for name, f, fdt in (("state indicator", f1, f1_dt),
                             ("signed time", f2, f2_dt)):
            rep = martingale_residual(m, None, None, f, fdt, 0.0, 0, cps,
                                      100000, seed=5)
            assert rep.max_abs_mean <= 3.0 * rep.se_at_max, (
                f"{name}: max |increment mean| {rep.max_abs_mean:.2e} "
                f"> 3 SE {3 * rep.se_at_max:.2e}")


def test_criterion_11_determinism(tmp_path):
    # repeating any command with identical configuration writes
    # byte-identical artifacts
    runs = {
        "solve": ["solve", "--builtin", "two_state_game", "--n-outer", "50",
                  "--substeps", "4"],
        "simulate": ["simulate", "--builtin", "two_state_game", "--n-outer",
                     "50", "--substeps", "4", "--paths", "500", "--seed",
                     "9", "--dump-paths", "3"],
        "audit": ["audit", "--builtin", "two_state_game", "--seed", "4"],
        "demo": ["demo", "one_state_parabola"],
    }
    for label, args in runs.items():
        a = tmp_path / f"{label}_a"
        b = tmp_path / f"{label}_b"
        assert main(args + ["--out", str(a)]) == EXIT_OK
        assert main(args + ["--out", str(b)]) == EXIT_OK
        names = sorted(os.listdir(a))
        assert names == sorted(os.listdir(b))
        for name in names:
            fa = (a / name).read_bytes()
            fb = (b / name).read_bytes()
            assert fa == fb, f"{label}/{name} differs between runs"
