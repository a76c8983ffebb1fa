"""Command-line surface: solve, bench, gen, diagnose, table1.

A flat key=value config file can seed any flag (``--config run.cfg``); flags
given on the command line override file values.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bench as bench_mod
from .bench import (BenchConfig, builtin_table1, gen_ar1, gen_exp_weights, load_csv,
                    make_penalty, run_benchmark, write_dataset_csv, write_trace_csv)
from .coordinate import CDConfig, cd_solve
from .diagnostics import verify_rate_ordering
from .missing import MissingDataset, px_solve_missing
from .model import Dataset
from .solvers import SolverConfig, run

_SOLVER_CHOICES = ("em", "px_ecme", "newton", "mm", "px_mm", "gd", "gd_backtrack",
                   "gpx_ecme_pgd", "aa1", "cd")


def _read_config_file(path):
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SystemExit(f"{path}:{lineno}: expected key=value")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _add_common(p):
    p.add_argument("--config", help="flat key=value file supplying flag defaults")
    p.add_argument("--solver", default="px_ecme",
                   help=f"one of {', '.join(_SOLVER_CHOICES)}")
    p.add_argument("--penalty", default="none",
                   choices=("none", "l1", "l2", "elastic_net", "scad"))
    p.add_argument("--lambda1", type=float, default=0.0)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iter", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", default="zeros", choices=("zeros", "random_normal"))
    p.add_argument("--block-size", type=int, default=None,
                   help="coordinate-descent refresh block size k")
    p.add_argument("--weight-mode", default="em", choices=("em", "nr"),
                   help="coordinate-descent weight function")


def _build_parser():
    ap = argparse.ArgumentParser(prog="pglogit",
                                 description="weighted penalized logistic regression solvers")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="fit one model to a CSV dataset")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="write the iteration trace CSV here")

    p = sub.add_parser("bench", help="replicated solver comparison")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--out", default="bench_out")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--gen", default="ar1", choices=("ar1",))
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--p", type=int, default=5)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--eta-path", default=None,
                   help="comma-separated decreasing tuning strengths (warm starts)")
    p.add_argument("--exp-weights", action="store_true",
                   help="redraw unit-exponential observation weights per replication")

    p = sub.add_parser("gen", help="write a generated dataset CSV")
    p.add_argument("--config", help="flat key=value file supplying flag defaults")
    p.add_argument("--gen", default="ar1", choices=("ar1",))
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--p", type=int, default=5)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exp-weights", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("diagnose", help="fixed-point rate report (analytic vs finite difference)")
    p.add_argument("--config", help="flat key=value file supplying flag defaults")
    p.add_argument("--data", default=None, help="CSV dataset; default is the built-in example")
    p.add_argument("--out", default=None, help="write the report as JSON here")

    p = sub.add_parser("table1", help="reproduce the built-in weighted example trace")
    p.add_argument("--config", help="flat key=value file supplying flag defaults")
    p.add_argument("--tol", type=float, default=1e-9)
    return ap


def _apply_config_file(ap, argv):
    # pre-scan for --config so file values become defaults, CLI flags override
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return ap
    raw = _read_config_file(known.config)
    converted = {}
    for key, val in raw.items():
        if val.lower() in ("true", "false"):
            converted[key] = val.lower() == "true"
        elif key in ("eta_path",):
            converted[key] = val
        else:
            try:
                converted[key] = int(val)
            except ValueError:
                try:
                    converted[key] = float(val)
                except ValueError:
                    converted[key] = val
    for action in ap._subparsers._group_actions[0].choices.values():
        action.set_defaults(**{k: v for k, v in converted.items()
                               if any(a.dest == k for a in action._actions)})
    return ap


def _cmd_solve(args):
    d = load_csv(args.data)
    if isinstance(d, MissingDataset):
        res = px_solve_missing(d, cfg=SolverConfig(tol=args.tol, max_iter=args.max_iter))
    elif args.solver == "cd":
        res = cd_solve(d, CDConfig(lambda1=args.lambda1, lambda2=args.lambda2,
                                   block_size_k=args.block_size,
                                   weight_mode=args.weight_mode,
                                   tol=args.tol, max_cycles=args.max_iter))
    else:
        pen = make_penalty(args.penalty, args.lambda1, args.lambda2)
        beta0 = None
        if args.init == "random_normal":
            beta0 = np.random.default_rng(args.seed).standard_normal(d.p)
        res = run(d, pen, args.solver, beta0=beta0,
                  cfg=SolverConfig(tol=args.tol, max_iter=args.max_iter))
    print(f"converged: {res.converged}  iterations: {res.iterations}"
          f"  divergence: {res.divergence_flag}")
    print(f"penalized loglik: {res.final_penalized_loglik:.6f}"
          f"  grad norm: {res.final_grad_norm:.3e}")
    print("beta:", " ".join(f"{b:.6g}" for b in np.atleast_1d(res.beta_hat)))
    if args.out:
        write_trace_csv(args.out, res.trace)
        print(f"trace written to {args.out}")
    return 0


def _cmd_bench(args):
    eta_path = None
    if args.eta_path:
        eta_path = tuple(float(v) for v in str(args.eta_path).split(","))
    cfg = BenchConfig(
        solvers=tuple(args.solver.split(",")), penalty=args.penalty,
        lambda1=args.lambda1, lambda2=args.lambda2, tol=args.tol,
        max_iter=args.max_iter, reps=args.reps, seed=args.seed, init=args.init,
        gen=args.gen, n=args.n, p=args.p, rho=args.rho, data=args.data,
        exp_weights=args.exp_weights, eta_path=eta_path, out=args.out,
        block_size=args.block_size, weight_mode=args.weight_mode)
    summary = run_benchmark(cfg)
    widths = ("method", "median_iter", "mean_iter", "median_sec", "not_converged")
    print("  ".join(w.rjust(14) for w in widths))
    for row in summary:
        print("  ".join(str(row[w])[:14].rjust(14) for w in widths))
    print(f"summary and traces written to {args.out}/")
    return 0


def _cmd_gen(args):
    d, beta = gen_ar1(args.n, args.p, args.rho, args.seed)
    if args.exp_weights:
        d = Dataset(X=d.X, y=d.y, m=d.m, s=gen_exp_weights(args.n, args.seed + 500_000))
    write_dataset_csv(d, args.out)
    print(f"wrote {d.n} rows, {d.p} x-columns to {args.out}")
    print("true beta:", " ".join(f"{b:.6g}" for b in beta))
    return 0


def _cmd_diagnose(args):
    d = load_csv(args.data) if args.data else builtin_table1()
    report = verify_rate_ordering(d)
    print(f"r_em = {report.r_em:.8f}")
    print(f"r_px = {report.r_px:.8f}")
    print(f"max |analytic - finite difference| = {report.fd_agreement:.3e}")
    print("rate ordering r_px <= r_em holds")
    if args.out:
        payload = {
            "beta_star": report.beta_star.tolist(),
            "r_em": report.r_em, "r_px": report.r_px,
            "fd_agreement": report.fd_agreement,
            "J_em": report.J_em.tolist(), "J_px": report.J_px.tolist(),
        }
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2)
        print(f"report written to {args.out}")
    return 0


def _cmd_table1(args):
    from .penalties import Penalty
    d = builtin_table1()
    cfg = SolverConfig(tol=args.tol, max_iter=200_000)
    print(f"built-in weighted example (n=7, p=2), zero start, tol {args.tol:g}")
    for kind in ("px_ecme", "em", "newton"):
        res = run(d, Penalty.none(), kind, cfg=cfg)
        k1 = res.trace[1] if len(res.trace) > 1 else None
        tag = ("diverged" if res.divergence_flag
               else f"converged in {res.iterations}" if res.converged else "not converged")
        beta = res.beta_hat
        print(f"{kind:>12}: {tag:>18}  beta=({beta[0]:.2f}, {beta[1]:.2f})"
              f"  loglik={res.final_penalized_loglik:.4f}"
              + (f"  first-step loglik={k1.loglik:.4f}" if k1 else ""))
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = _build_parser()
    ap = _apply_config_file(ap, argv)
    args = ap.parse_args(argv)
    handlers = {"solve": _cmd_solve, "bench": _cmd_bench, "gen": _cmd_gen,
                "diagnose": _cmd_diagnose, "table1": _cmd_table1}
    return handlers[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
