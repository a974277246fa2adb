"""Command-line front end: solve / simulate / verify / audit / demo.

Exit codes: 0 success, 2 input error, 3 residual failure, 4 verification
failure.  All outputs are deterministic given (flags, model file, seed).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import demos, hamiltonian, simulator, solver, strategy
from .model import GameModel, ModelError, compute_bounds, load_model, model_to_dict

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RESIDUAL = 3
EXIT_VERIFY = 4


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _load(args) -> GameModel:
    if args.builtin:
        return demos.builtin_model(args.builtin)
    if args.model:
        return load_model(args.model)
    raise ModelError("either --model or --builtin is required")


def _bounds_dict(b) -> dict:
    return {"m_q": b.m_q, "m_h": b.m_h, "m_g": b.m_g, "l_g": b.l_g,
            "c1": b.c1, "c2": b.c2, "c3": b.c3}


def _ensure_out(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_solve(args) -> int:
    model = _load(args)
    out = _ensure_out(args)
    bounds = compute_bounds(model)
    grid = solver.solve_zachrisson(model, args.n_outer, args.substeps,
                                   bounds=bounds)
    fd_tol = args.fd_tol
    if fd_tol is None:
        fd_tol = solver.default_fd_tol(model, grid.n_outer, grid.substeps,
                                       bounds=bounds)
    report = solver.check_residuals(grid, model, fd_tol, bounds=bounds)
    solver.export_valuegrid(grid, os.path.join(out, "value_grid.csv"))
    _write_json(os.path.join(out, "bounds.json"), _bounds_dict(bounds))
    _write_json(os.path.join(out, "residuals.json"), {
        "terminal_error": report.terminal_error,
        "max_obstacle_violation": report.max_obstacle_violation,
        "max_z3_violation": report.max_z3_violation,
        "max_z4_violation": report.max_z4_violation,
        "binding_set_size": report.binding_set_size,
        "fd_tol": report.fd_tol,
        "ok": report.ok,
        "n_outer": grid.n_outer,
        "substeps": grid.substeps,
    })
    pol_u = strategy.extract_min_policy(grid, model)
    pol_v = strategy.extract_max_policy(grid, model)
    rule = strategy.extract_stopping_rule(grid, model)
    strategy.export_policy(pol_u, os.path.join(out, "policy_min.csv"))
    strategy.export_policy(pol_v, os.path.join(out, "policy_max.csv"))
    strategy.export_stopping_rule(rule, os.path.join(out, "stopping_rule.csv"))
    print(f"solve: N={grid.n_outer} S={grid.substeps} "
          f"value(0)={np.array2string(grid.values[0], precision=6)}")
    print(f"residuals: terminal={report.terminal_error:.3g} "
          f"obstacle={report.max_obstacle_violation:.3g} "
          f"z3={report.max_z3_violation:.3g} z4={report.max_z4_violation:.3g} "
          f"(fd_tol={fd_tol:.3g}) -> {'ok' if report.ok else 'FAIL'}")
    return EXIT_OK if report.ok else EXIT_RESIDUAL


def cmd_simulate(args) -> int:
    model = _load(args)
    out = _ensure_out(args)
    grid = solver.solve_zachrisson(model, args.n_outer, args.substeps)
    pol_u = strategy.extract_min_policy(grid, model)
    pol_v = strategy.extract_max_policy(grid, model)
    rule = strategy.extract_stopping_rule(grid, model)
    rep = simulator.estimate_value(model, pol_u, pol_v, rule, args.t0,
                                   args.i0, args.paths, args.seed,
                                   threads=args.threads)
    m0 = grid.node_at_or_after(args.t0)
    _write_json(os.path.join(out, "simulation.json"), {
        "mean": rep.mean, "std_error": rep.std_error,
        "ci_lo": rep.ci95[0], "ci_hi": rep.ci95[1],
        "n_paths": rep.n_paths, "seed": rep.seed,
        "solver_value": float(grid.values[m0, args.i0]),
    })
    if args.dump_paths:
        with open(os.path.join(out, "paths.csv"), "w", encoding="utf-8") as f:
            f.write("path_id,event_time,state\n")
            for p in range(args.dump_paths):
                tr = simulator.simulate_path(
                    model, pol_u, pol_v, rule, args.t0, args.i0,
                    simulator.path_rng(args.seed, p))
                f.write(f"{p},{tr.t0:.17g},{tr.i0}\n")
                for t, s in tr.events:
                    f.write(f"{p},{t:.17g},{s}\n")
    print(f"simulate: mean={rep.mean:.6g} se={rep.std_error:.3g} "
          f"solver value={grid.values[m0, args.i0]:.6g}")
    return EXIT_OK


def cmd_verify(args) -> int:
    model = _load(args)
    out = _ensure_out(args)
    bounds = compute_bounds(model)
    failures = []

    if args.grid:
        grid = solver.load_valuegrid(args.grid, args.n_outer, args.substeps)
    else:
        grid = solver.solve_zachrisson(model, args.n_outer, args.substeps,
                                       bounds=bounds)
    fd_tol = args.fd_tol
    if fd_tol is None:
        fd_tol = solver.default_fd_tol(model, grid.n_outer, grid.substeps,
                                       bounds=bounds)
    res = solver.check_residuals(grid, model, fd_tol, bounds=bounds)
    if not res.ok:
        failures.append("residuals")

    n_list = [max(1, args.n_outer // 4), max(1, args.n_outer // 2),
              args.n_outer]
    n_list = sorted(set(n_list))
    conv = (solver.convergence_study(model, n_list, args.substeps)
            if len(n_list) > 1 else [])
    tol_scheme = 2.0 * conv[-1][2] if conv else 0.0

    saddle = simulator.saddle_check(model, grid, args.deviations, args.paths,
                                    args.seed, t0=args.t0, i0=args.i0,
                                    tol_scheme=tol_scheme,
                                    threads=args.threads)
    if not saddle.all_ok:
        failures.append("saddle")

    def f1(t, i):
        t = np.asarray(t, dtype=np.float64)
        return np.broadcast_to(t, np.broadcast_shapes(t.shape,
                                                      np.shape(i))).copy()

    def f1_dt(t, i):
        return np.ones(np.broadcast_shapes(np.shape(np.asarray(t)),
                                           np.shape(i)))

    def f2(t, i):
        return np.asarray(t) * 0.0 + (np.asarray(i) == 0)

    def f2_dt(t, i):
        return np.zeros(np.broadcast_shapes(np.shape(np.asarray(t)),
                                            np.shape(i)))

    pol_u = strategy.extract_min_policy(grid, model)
    pol_v = strategy.extract_max_policy(grid, model)
    checkpoints = np.linspace(args.t0, model.T, 5)
    mart = []
    for name, f, fdt in (("linear_time", f1, f1_dt),
                         ("state_indicator", f2, f2_dt)):
        rep = simulator.martingale_residual(
            model, pol_u, pol_v, f, fdt, args.t0, args.i0, checkpoints,
            max(1000, args.paths), args.seed + 777)
        ok = rep.max_abs_mean <= 3.0 * rep.se_at_max + 1e-12
        if not ok:
            failures.append(f"martingale:{name}")
        mart.append({"test_fn": name, "max_abs_mean": rep.max_abs_mean,
                     "se_at_max": rep.se_at_max, "ok": ok})

    _write_json(os.path.join(out, "verify_report.json"), {
        "residuals": {
            "terminal_error": res.terminal_error,
            "max_obstacle_violation": res.max_obstacle_violation,
            "max_z3_violation": res.max_z3_violation,
            "max_z4_violation": res.max_z4_violation,
            "fd_tol": fd_tol, "ok": res.ok},
        "convergence": [{"n_coarse": a, "n_fine": b, "sup_diff": dd}
                        for a, b, dd in conv],
        "tol_scheme": tol_scheme,
        "saddle": {
            "value": saddle.value,
            "all_ok": saddle.all_ok,
            "probes": [{"side": p.side, "kind": p.kind, "mean": p.mean,
                        "std_error": p.std_error, "bound": p.bound,
                        "ok": p.ok} for p in saddle.probes]},
        "martingale": mart,
        "failures": failures,
    })
    if failures:
        print(f"verify: FAILED ({', '.join(failures)})")
        return EXIT_VERIFY
    print(f"verify: all checks passed (value={saddle.value:.6g}, "
          f"tol_scheme={tol_scheme:.3g})")
    return EXIT_OK


def cmd_audit(args) -> int:
    model = _load(args)
    out = _ensure_out(args)
    bounds = compute_bounds(model)
    rng = np.random.default_rng(args.seed)
    ts = rng.uniform(0.0, model.T, size=32)
    ws = rng.uniform(-2.0 * max(1.0, bounds.c1), 2.0 * max(1.0, bounds.c1),
                     size=(32, model.d))
    gap, witness = hamiltonian.isaacs_audit(model, ts, ws)
    t_w, i_w, w_w = witness
    _write_json(os.path.join(out, "isaacs_audit.json"), {
        "max_gap": gap,
        "witness": {"t": t_w, "state": i_w, "w": list(w_w)},
        "n_time_samples": 32, "n_w_samples": 32, "seed": args.seed,
    })
    print(f"audit: max minimax gap {gap:.3g} at t={t_w:.4g}, state {i_w}")
    if gap > 1e-9:
        print("warning: Isaacs condition violated beyond tolerance; "
              "solver output has upper-value semantics")
    return EXIT_OK


def cmd_demo(args) -> int:
    model = demos.builtin_model(args.name)
    out = _ensure_out(args)
    model_path = os.path.join(out, f"{args.name}.json")
    _write_json(model_path, model_to_dict(model))
    bounds = compute_bounds(model)
    grid = solver.solve_zachrisson(model, 200, 8, bounds=bounds)
    _write_json(os.path.join(out, f"{args.name}.expected.json"), {
        "name": args.name,
        "bounds": _bounds_dict(bounds),
        "value_at_0": grid.values[0].tolist(),
        "reference_resolution": {"n_outer": 200, "substeps": 8},
    })
    print(f"demo: wrote {model_path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stopgame",
        description="one-side-stopping Markov game solver and verifier")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sim=False):
        sp.add_argument("--model", help="path to a JSON model document")
        sp.add_argument("--builtin", help="name of a shipped demo instance")
        sp.add_argument("--n-outer", type=int, default=200, dest="n_outer")
        sp.add_argument("--substeps", type=int, default=8)
        sp.add_argument("--out", default="out")
        sp.add_argument("--fd-tol", type=float, default=None, dest="fd_tol")
        if sim:
            sp.add_argument("--t0", type=float, default=0.0)
            sp.add_argument("--i0", type=int, default=0,
                            help="initial state (0-based)")
            sp.add_argument("--paths", type=int, default=10000)
            sp.add_argument("--seed", type=int, default=1)
            sp.add_argument("--threads", type=int, default=1)

    sp = sub.add_parser("solve", help="solve and write grid + reports")
    common(sp)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("simulate", help="Monte Carlo value estimate")
    common(sp, sim=True)
    sp.add_argument("--dump-paths", type=int, default=0, dest="dump_paths")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("verify", help="convergence + saddle + martingale")
    common(sp, sim=True)
    sp.add_argument("--grid", help="verify a previously exported grid CSV")
    sp.add_argument("--deviations", type=int, default=4)
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("audit", help="Isaacs-condition audit")
    common(sp)
    sp.add_argument("--seed", type=int, default=1)
    sp.set_defaults(fn=cmd_audit)

    sp = sub.add_parser("demo", help="emit a shipped model + expectations")
    sp.add_argument("name")
    sp.add_argument("--out", default="out")
    sp.set_defaults(fn=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ModelError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
