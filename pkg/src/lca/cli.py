"""
Command line interface.

    lca solve       solve one instance with the LCA or ISTA
    lca experiment  convergence | switches | rate
    lca validate    run the invariant suite

Exit codes: 0 success, 1 failed check, 2 usage or I/O error.

Output formats
--------------
Every CSV starts with a ``#`` comment line holding the library version and
the full parameter set as JSON, followed by a header row.

convergence_nodes.csv     t, node, status, u        (status: active/inactive at the solution)
convergence_solution.csv  index, a0, lca, ista      (union of the true, LCA and ISTA supports)
convergence_starts.csv    start, t, u_<i>, u_<j>    (two nodes from the final active set)
switches_histogram.csv    switch_count_bin, percentage
rate_decay.csv            t, normalized_error, bound_final, bound_max
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import activation as act
from . import diagnostics as dg
from . import experiments as ex
from .baseline import IstaConfig, ista_solve
from .dynamics import EULER, RK4, SolverConfig, simulate, write_trajectory_csv, write_trajectory_json
from .errors import LcaError
from .model import load_problem, save_problem


class UsageError(Exception):
    pass


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".17g")
    return x


def _write_csv(path, header, rows, params):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# lca {__version__} {json.dumps(params, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _emit_json(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


_GEN_KEYS = {"m": int, "n": int, "s": int, "noise": float, "seed": int, "dict": str}


def parse_gen(text: str) -> dict:
    """Parse ``m=256,n=512,s=5,noise=0.0062,seed=1``.

    ``dict=dct`` selects the orthonormal DCT basis instead of the
    identity/DCT union.
    """
    out = {}
    for item in filter(None, (p.strip() for p in text.split(","))):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in _GEN_KEYS:
            raise UsageError(f"--gen: bad entry {item!r} (keys: {', '.join(_GEN_KEYS)})")
        try:
            out[key] = _GEN_KEYS[key](value)
        except ValueError:
            raise UsageError(f"--gen: {key} must be {_GEN_KEYS[key].__name__}, got {value!r}") from None
    return out


def _instance_params(args, defaults=None) -> ex.InstanceParams:
    kw = dict(defaults or {})
    kw.update(parse_gen(args.gen or ""))
    if "dict" in kw:
        kw["dictionary"] = kw.pop("dict")
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    kw["lam"] = args.lam
    try:
        return ex.InstanceParams(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"--gen: {exc}") from None


def _solver_config(args, **overrides) -> SolverConfig:
    kw = dict(tau=args.tau, dt=args.dt, max_time=args.max_time,
              residual_tol=args.residual_tol, method=args.method)
    kw.update(overrides)
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _add_common(p, residual_tol=1e-6):
    p.add_argument("--gen", metavar="SPEC", help="generator parameters, e.g. m=256,n=512,s=5,noise=0.0062,seed=1[,dict=union|dct]")
    p.add_argument("--seed", type=int, default=None, help="instance seed (overrides seed= in --gen)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.025, help="threshold (default 0.025)")
    p.add_argument("--tau", type=float, default=0.01, help="time constant (default 0.01)")
    p.add_argument("--dt", type=float, default=None, help="step size (default tau/10)")
    p.add_argument("--max-time", type=float, default=None, help="simulated time limit (default 100 tau for solve, 1000 tau for experiments)")
    p.add_argument("--residual-tol", type=float, default=residual_tol,
                   help=f"stop when max |du/dt| falls below this (default {residual_tol:g})")
    p.add_argument("--method", choices=[EULER, RK4], default=EULER)
    p.add_argument("--activation", choices=["soft", "tanh"], default="soft")


# --------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    if args.problem and args.gen:
        raise UsageError("give either --problem or --gen, not both")
    if args.problem:
        problem, truth = load_problem(args.problem)
        params = {"problem": str(args.problem)}
    else:
        ip = _instance_params(args)
        problem, truth = ip.build()
        params = ip.as_dict()
        if args.save_problem:
            save_problem(args.save_problem, problem, truth)
    if args.lam_given and args.problem:
        problem = type(problem)(problem.dictionary, problem.y, args.lam)

    spec = act.by_name(args.activation, problem.lam)
    result = {"solver": args.solver, "version": __version__, "params": params, "lambda": problem.lam}
    if args.solver == "ista":
        if not spec.is_soft:
            raise UsageError("ISTA only handles the soft threshold")
        a, iters, history = ista_solve(problem, IstaConfig(tol=args.ista_tol, max_iters=args.max_iters,
                                                           accelerated=args.fista))
        result.update(iterations=iters, converged=iters < args.max_iters)
    else:
        cfg = _solver_config(args)
        traj = simulate(problem, spec, cfg)
        a = traj.final_state.a
        result.update(
            steps=traj.steps,
            time=traj.final_state.t,
            converged=traj.converged,
            residual=traj.residual,
            switch_count=len(traj.switch_events),
            tau=cfg.tau,
            dt=cfg.dt,
            method=cfg.method,
        )
        if args.trajectory_csv:
            with open(args.trajectory_csv, "w", newline="") as fh:
                write_trajectory_csv(traj, fh, include_vectors=args.include_vectors,
                                     comment=f"lca {__version__} {json.dumps(params, sort_keys=True)}")
        if args.trajectory_json:
            with open(args.trajectory_json, "w") as fh:
                write_trajectory_json(traj, fh)

    support = np.flatnonzero(a).tolist()
    result.update(a=a.tolist(), support=support, nnz=len(support), objective=dg.objective(problem, spec, a))
    if spec.is_soft:
        rep = dg.critical_point_slack(problem, a)
        result["critical_point"] = {"active_slack": rep.active_slack, "inactive_slack": rep.inactive_slack}
    else:
        result["critical_point"] = None
    if truth is not None:
        result["true_support"] = list(truth.support)
    _emit_json(result, args.out)
    return 0


# --------------------------------------------------------------------------
# experiments


def cmd_experiment_convergence(args) -> int:
    ip = _instance_params(args)
    cfg = _solver_config(args, record_stride=args.record_stride)
    res = ex.run_convergence(ip, cfg, n_nodes=args.nodes, starts=args.starts,
                             start_scale=args.start_scale, activation=args.activation)
    params = {**ip.as_dict(), "tau": cfg.tau, "dt": cfg.dt, "max_time": cfg.max_time,
              "residual_tol": cfg.residual_tol, "method": cfg.method, "nodes": args.nodes,
              "starts": args.starts, "start_scale": args.start_scale, "activation": args.activation}
    out = Path(args.outdir)
    _write_csv(out / "convergence_nodes.csv", ["t", "node", "status", "u"], res["node_rows"], params)
    _write_csv(out / "convergence_solution.csv", ["index", "a0", "lca", "ista"], res["solution_rows"], params)
    i, j = res["pair"]
    _write_csv(out / "convergence_starts.csv", ["start", "t", f"u_{i}", f"u_{j}"], res["start_rows"], params)
    _emit_json(res["summary"], args.summary)
    return 0


def cmd_experiment_switches(args) -> int:
    ip = _instance_params(args, defaults={"m": 64, "s": 3})
    cfg = _solver_config(args)
    res = ex.run_switches(ip, cfg, trials=args.trials, workers=args.workers,
                          bin_width=args.bin_width, activation=args.activation)
    params = {**ip.as_dict(), "tau": cfg.tau, "dt": cfg.dt, "max_time": cfg.max_time,
              "residual_tol": cfg.residual_tol, "method": cfg.method, "trials": args.trials,
              "bin_width": args.bin_width, "activation": args.activation}
    _write_csv(Path(args.out), ["switch_count_bin", "percentage"], res["histogram"], params)
    summary = dict(res["summary"])
    summary["max_over_n"] = summary["max"] / ip.n
    _emit_json(summary, args.summary)
    return 0 if summary["all_converged"] else 1


def cmd_experiment_rate(args) -> int:
    ip = _instance_params(args)
    cfg = _solver_config(args, record_stride=args.record_stride)
    res = ex.run_rate(ip, cfg, activation=args.activation)
    params = {**ip.as_dict(), "tau": cfg.tau, "dt": cfg.dt, "max_time": cfg.max_time,
              "residual_tol": cfg.residual_tol, "method": cfg.method, "activation": args.activation}
    curve = res["curve"]
    rows = zip(curve.t.tolist(), curve.error.tolist(), res["bound_final"].tolist(), res["bound_max"].tolist())
    _write_csv(Path(args.out), ["t", "normalized_error", "bound_final", "bound_max"], rows, params)
    _emit_json(res["summary"], args.summary)
    return 0


def cmd_validate(args) -> int:
    rows = ex.run_validation(quick=args.quick, alpha=args.alpha, seed=args.seed)
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    failed = sum(not r[1] for r in rows)
    print(f"{len(rows) - failed}/{len(rows)} checks passed")
    return 0 if failed == 0 else 1


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lca", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"lca {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance")
    _add_common(p)
    p.add_argument("--problem", help="problem JSON file")
    p.add_argument("--solver", choices=["lca", "ista"], default="lca")
    p.add_argument("--ista-tol", type=float, default=1e-10)
    p.add_argument("--max-iters", type=int, default=100_000)
    p.add_argument("--fista", action="store_true", help="use the accelerated ISTA variant")
    p.add_argument("--out", help="write the solution JSON here instead of stdout")
    p.add_argument("--save-problem", help="also save the generated problem as JSON")
    p.add_argument("--trajectory-csv", help="write per-sample t, V, nnz")
    p.add_argument("--include-vectors", action="store_true", help="add u and a columns to the trajectory CSV")
    p.add_argument("--trajectory-json", help="write the full trajectory with switch events")
    p.set_defaults(func=cmd_solve)

    exp = sub.add_parser("experiment", help="reproducible experiments").add_subparsers(dest="experiment", required=True)

    p = exp.add_parser("convergence", help="node traces, final solution, random starts",
                       description="Writes convergence_nodes.csv, convergence_solution.csv and "
                                   "convergence_starts.csv into --outdir; see `lca --help` for columns.")
    _add_common(p, residual_tol=1e-8)
    p.add_argument("--outdir", default=".")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--starts", type=int, default=30)
    p.add_argument("--start-scale", type=float, default=0.5, help="std of the random initial states")
    p.add_argument("--record-stride", type=int, default=1)
    p.add_argument("--summary", help="summary JSON path (default stdout)")
    p.set_defaults(func=cmd_experiment_convergence)

    p = exp.add_parser("switches", help="histogram of switch counts",
                       description="Writes switch_count_bin, percentage rows; the summary holds min/median/max.")
    _add_common(p)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--workers", type=int, default=ex.default_workers())
    p.add_argument("--bin-width", type=int, default=1)
    p.add_argument("--out", default="switches_histogram.csv")
    p.add_argument("--summary", help="summary JSON path (default stdout)")
    p.set_defaults(func=cmd_experiment_switches)

    p = exp.add_parser("rate", help="decay of ||u(t) - u*|| against the exponential bounds",
                       description="Writes t, normalized_error, bound_final, bound_max rows; the summary "
                                   "holds the fitted log-slope and both bound slopes.")
    _add_common(p, residual_tol=1e-10)
    p.add_argument("--out", default="rate_decay.csv")
    p.add_argument("--record-stride", type=int, default=1)
    p.add_argument("--summary", help="summary JSON path (default stdout)")
    p.set_defaults(func=cmd_experiment_rate)

    p = sub.add_parser("validate", help="run the invariant suite")
    p.add_argument("--quick", action="store_true", help="fewer randomized trials")
    p.add_argument("--alpha", type=float, default=None, help="override alpha for the soft threshold")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    argv_list = sys.argv[1:] if argv is None else list(argv)
    args.lam_given = any(a == "--lambda" or a.startswith("--lambda=") for a in argv_list)
    if getattr(args, "max_time", None) is None and hasattr(args, "tau") and args.command == "experiment":
        args.max_time = 1000 * args.tau
    try:
        return args.func(args)
    except (UsageError, LcaError, OSError, ValueError) as exc:
        print(f"lca: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
