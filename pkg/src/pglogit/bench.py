"""Dataset generators, CSV interchange, and the benchmark harness.

File formats
------------
dataset CSV   header ``y,m,s,x1,...,xp``; the sentinel ``NA`` is allowed only
              in x-columns and routes the file to the missing-covariate model.
trace CSV     ``iter,loglik,penalized_loglik,step_norm,elapsed_sec`` with
              floats at 17 significant digits (round-trip exact).
summary CSV   ``method,median_iter,mean_iter,sd_iter,median_sec,mean_sec,
              mean_final_loglik,not_converged`` with floats at 4 decimals.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .coordinate import CDConfig, cd_solve
from .missing import MissingDataset
from .model import Dataset
from .penalties import Penalty
from .solvers import SolveResult, SolverConfig, TraceRow, run

__all__ = [
    "builtin_table1",
    "gen_ar1",
    "gen_exp_weights",
    "load_csv",
    "write_dataset_csv",
    "write_trace_csv",
    "read_trace_csv",
    "BenchConfig",
    "run_benchmark",
    "summarize_trace_files",
    "make_penalty",
]

# tuning-strength placeholder for the published nine-step sequence whose eighth
# entry is unrecoverable from the source; 0.5 is a documented substitute
DEFAULT_ETA_PATH = (5000.0, 1000.0, 500.0, 200.0, 50.0, 10.0, 2.0, 0.5, 0.1)


def builtin_table1() -> Dataset:
    """The built-in 7-point weighted example with a single covariate plus intercept."""
    y = np.array([1, 0, 1, 1, 1, 0, 1.0])
    x = np.array([0.0, 0.0, 0.001, 100.0, -1.0, -1.0, 0.5])
    s = np.array([0.4, 0.01, 0.4, 0.01, 0.04, 0.1, 0.04])
    X = np.column_stack([np.ones(7), x])
    return Dataset(X=X, y=y, m=np.ones(7), s=s)


def gen_ar1(n: int, p: int, rho: float, seed: int):
    """Bernoulli outcomes over an AR(1) design; returns (Dataset, true beta).

    Column 1 is the intercept; column 2 is standard normal; later columns
    follow x_j = rho x_{j-1} + sqrt(1 - rho^2) eps_j, which keeps every column
    unit variance and every adjacent pair at correlation rho.  Coefficients are
    Bernoulli(0.75) gates times t_3 draws, built as N(0,1)/sqrt(chi2_3 / 3).
    All randomness comes from numpy's seeded default_rng (PCG64), so a given
    seed reproduces the dataset bit for bit.
    """
    if n < 1 or p < 1 or rho < 0:
        raise ValueError("need n >= 1, p >= 1, rho >= 0")
    rng = np.random.default_rng(seed)
    X = np.ones((n, p))
    if p > 1:
        X[:, 1] = rng.standard_normal(n)
        innov_sd = np.sqrt(max(1.0 - rho * rho, 0.0))
        for j in range(2, p):
            X[:, j] = rho * X[:, j - 1] + innov_sd * rng.standard_normal(n)
    z = rng.random(p) < 0.75
    t3 = rng.standard_normal(p) / np.sqrt(rng.chisquare(3, size=p) / 3.0)
    beta = np.where(z, t3, 0.0)
    yprob = expit(X @ beta)
    y = (rng.random(n) < yprob).astype(float)
    d = Dataset(X=X, y=y, m=np.ones(n), s=np.ones(n))
    return d, beta


def gen_exp_weights(n: int, seed: int) -> np.ndarray:
    """n i.i.d. unit-rate exponential weights from the seeded default_rng."""
    if n < 1:
        raise ValueError("need n >= 1")
    return np.random.default_rng(seed).exponential(1.0, size=n)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_dataset_csv(d, path):
    """Write a Dataset or MissingDataset in the ``y,m,s,x1..xp`` layout."""
    X = d.Xobs if isinstance(d, MissingDataset) else d.X
    p = X.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "m", "s"] + [f"x{j + 1}" for j in range(p)])
        for i in range(X.shape[0]):
            xs = ["NA" if np.isnan(v) else _fmt(v) for v in X[i]]
            w.writerow([_fmt(d.y[i]), _fmt(d.m[i]), _fmt(d.s[i])] + xs)


def _parse_cell(raw, row, col):
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"non-numeric value {raw!r} at row {row}, column {col!r}") from None


def load_csv(path):
    """Load a dataset CSV; 'NA' entries in x-columns route to MissingDataset.

    Validation failures name the offending row (1-based, excluding the header)
    and column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty file") from None
        header = [h.strip() for h in header]
        p = len(header) - 3
        expected = ["y", "m", "s"] + [f"x{j + 1}" for j in range(p)]
        if p < 1 or header != expected:
            raise ValueError(f"malformed header {header!r}; expected y,m,s,x1,...,xp")
        y, m, s, rows = [], [], [], []
        any_missing = False
        for i, rec in enumerate(reader, start=1):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ValueError(f"row {i} has {len(rec)} fields, expected {len(header)}")
            for name, raw in zip(("y", "m", "s"), rec[:3]):
                if raw.strip() == "NA":
                    raise ValueError(f"'NA' is only allowed in x-columns (row {i}, column {name!r})")
            yi = _parse_cell(rec[0], i, "y")
            mi = _parse_cell(rec[1], i, "m")
            si = _parse_cell(rec[2], i, "s")
            if yi > mi:
                raise ValueError(f"y exceeds m at row {i} ({yi:g} > {mi:g})")
            if si < 0:
                raise ValueError(f"negative weight at row {i}, column 's'")
            xr = []
            for j, raw in enumerate(rec[3:]):
                if raw.strip() == "NA":
                    any_missing = True
                    xr.append(np.nan)
                else:
                    xr.append(_parse_cell(raw, i, f"x{j + 1}"))
            y.append(yi)
            m.append(mi)
            s.append(si)
            rows.append(xr)
        if not rows:
            raise ValueError("no data rows")
    X = np.asarray(rows)
    if any_missing:
        seen = X[:, 1:][~np.isnan(X[:, 1:])]
        if seen.size and not np.all((seen == 0.0) | (seen == 1.0)):
            i, j = next((i + 1, j + 1) for (i, j) in np.argwhere(
                ~np.isnan(X[:, 1:]) & (X[:, 1:] != 0.0) & (X[:, 1:] != 1.0)))
            raise ValueError(f"missing-covariate files must be binary; "
                             f"offending value at row {i}, column 'x{j + 1}'")
        return MissingDataset(Xobs=X, y=np.asarray(y), m=np.asarray(m), s=np.asarray(s))
    return Dataset(X=X, y=np.asarray(y), m=np.asarray(m), s=np.asarray(s))


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "loglik", "penalized_loglik", "step_norm", "elapsed_sec"])
        for row in trace:
            w.writerow([row.iteration, f"{row.loglik:.17g}", f"{row.penalized_loglik:.17g}",
                        f"{row.step_norm:.17g}", f"{row.elapsed_sec:.17g}"])


def read_trace_csv(path):
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            out.append(TraceRow(int(rec[0]), float(rec[1]), float(rec[2]),
                                float(rec[3]), float(rec[4])))
    return out


def make_penalty(kind: str, lambda1: float = 0.0, lambda2: float = 0.0,
                 scad_a: float = 3.7) -> Penalty:
    kind = kind.lower()
    if kind == "none":
        return Penalty.none()
    if kind == "l1":
        return Penalty.l1(lambda1)
    if kind == "l2":
        return Penalty.l2(lambda2)
    if kind == "elastic_net":
        return Penalty.elastic_net(lambda1, lambda2)
    if kind == "scad":
        return Penalty.scad(lambda1, scad_a)
    raise ValueError(f"unknown penalty kind {kind!r}")


@dataclass(frozen=True)
class BenchConfig:
    """One benchmark run: methods x replications (x tuning path, when set).

    The seed fully determines generated data and random starts; replication r
    draws from default_rng(seed + r).  ``eta_path`` multiplies the penalty
    strength along a decreasing sequence with warm starts.
    """

    solvers: tuple = ("em", "px_ecme")
    penalty: str = "none"
    lambda1: float = 0.0
    lambda2: float = 0.0
    tol: float = 1e-7
    max_iter: int = 100_000
    reps: int = 1
    seed: int = 0
    init: str = "zeros"              # zeros | random_normal
    gen: str = "ar1"
    n: int = 500
    p: int = 5
    rho: float = 0.0
    data: str | None = None
    exp_weights: bool = False        # redraw Exp(1) observation weights per replication
    eta_path: tuple | None = None
    out: str = "bench_out"
    block_size: int | None = None
    weight_mode: str = "em"

    def __post_init__(self):
        if self.init not in ("zeros", "random_normal"):
            raise ValueError("init must be 'zeros' or 'random_normal'")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")


def _dataset_for_rep(cfg: BenchConfig, rep: int, base=None):
    rng_seed = cfg.seed + rep
    if cfg.data is not None:
        d = base
        if cfg.exp_weights:
            d = Dataset(X=d.X, y=d.y, m=d.m, s=gen_exp_weights(d.n, rng_seed))
        return d
    d, _ = gen_ar1(cfg.n, cfg.p, cfg.rho, rng_seed)
    if cfg.exp_weights:
        d = Dataset(X=d.X, y=d.y, m=d.m,
                    s=gen_exp_weights(d.n, rng_seed + 500_000))
    return d


def _init_beta(cfg: BenchConfig, rep: int, p: int):
    if cfg.init == "zeros":
        return np.zeros(p)
    return np.random.default_rng(cfg.seed + rep + 1_000_000).standard_normal(p)


def _solve_one(cfg: BenchConfig, method: str, d: Dataset, pen: Penalty, beta0) -> SolveResult:
    if method == "cd":
        cd_cfg = CDConfig(lambda1=pen.lambda1, lambda2=pen.lambda2,
                          block_size_k=cfg.block_size, weight_mode=cfg.weight_mode,
                          tol=cfg.tol, max_cycles=cfg.max_iter)
        return cd_solve(d, cd_cfg, beta0=beta0)
    return run(d, pen, method, beta0=beta0,
               cfg=SolverConfig(tol=cfg.tol, max_iter=cfg.max_iter))


def _scaled_penalty(cfg: BenchConfig, eta: float) -> Penalty:
    kind = cfg.penalty.lower()
    if kind == "l1":
        return Penalty.l1(eta)
    if kind == "l2":
        return Penalty.l2(eta)
    if kind == "elastic_net":
        return Penalty.elastic_net(eta * cfg.lambda1, eta * cfg.lambda2)
    raise ValueError("a tuning path needs an l1, l2 or elastic_net penalty")


def run_benchmark(cfg: BenchConfig):
    """Run every (method, replication[, eta]) combination and write traces plus a summary.

    Solver failures are recorded as not-converged rows; the batch never aborts.
    Returns the summary as a list of dicts (one per method).
    """
    os.makedirs(cfg.out, exist_ok=True)
    base = load_csv(cfg.data) if cfg.data is not None else None
    trace_files: dict[str, list] = {m: [] for m in cfg.solvers}

    for rep in range(cfg.reps):
        d = _dataset_for_rep(cfg, rep, base)
        beta0 = _init_beta(cfg, rep, d.X.shape[1])
        for method in cfg.solvers:
            if cfg.eta_path is not None:
                warm = beta0
                for k, eta in enumerate(cfg.eta_path):
                    pen = _scaled_penalty(cfg, eta)
                    res = _solve_one(cfg, method, d, pen, warm)
                    warm = res.beta_hat if np.all(np.isfinite(res.beta_hat)) else beta0
                    path = os.path.join(cfg.out, f"trace_{method}_r{rep}_e{k}.csv")
                    write_trace_csv(path, res.trace)
                    trace_files[method].append(path)
            else:
                pen = make_penalty(cfg.penalty, cfg.lambda1, cfg.lambda2)
                try:
                    res = _solve_one(cfg, method, d, pen, beta0)
                    trace = res.trace
                except Exception:
                    trace = []
                path = os.path.join(cfg.out, f"trace_{method}_r{rep}.csv")
                write_trace_csv(path, trace)
                trace_files[method].append(path)

    summary = summarize_trace_files(trace_files, cfg.tol)
    _write_summary(os.path.join(cfg.out, "summary.csv"), summary)
    return summary


def _run_stats(trace, tol):
    if len(trace) < 2:
        return dict(iterations=0, seconds=0.0, final_loglik=float("nan"), converged=False)
    last = trace[-1]
    converged = np.isfinite(last.loglik) and last.step_norm < tol
    return dict(iterations=last.iteration,
                seconds=float(sum(r.elapsed_sec for r in trace)),
                final_loglik=last.loglik,
                converged=bool(converged))


def summarize_trace_files(trace_files: dict, tol: float):
    """Aggregate per-method statistics from trace CSV files on disk."""
    rows = []
    for method, paths in trace_files.items():
        stats = [_run_stats(read_trace_csv(p), tol) for p in paths]
        iters = np.array([st["iterations"] for st in stats], dtype=float)
        secs = np.array([st["seconds"] for st in stats])
        lls = np.array([st["final_loglik"] for st in stats])
        rows.append({
            "method": method,
            "median_iter": float(np.median(iters)),
            "mean_iter": float(np.mean(iters)),
            "sd_iter": float(np.std(iters, ddof=1)) if len(stats) > 1 else 0.0,
            "median_sec": float(np.median(secs)),
            "mean_sec": float(np.mean(secs)),
            "mean_final_loglik": float(np.mean(lls)),
            "not_converged": int(sum(not st["converged"] for st in stats)),
        })
    return rows


_SUMMARY_COLS = ("method", "median_iter", "mean_iter", "sd_iter", "median_sec",
                 "mean_sec", "mean_final_loglik", "not_converged")


def _write_summary(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_SUMMARY_COLS)
        for r in rows:
            w.writerow([r["method"]] + [f"{r[c]:.4f}" for c in _SUMMARY_COLS[1:-1]]
                       + [str(r["not_converged"])])
