"""Iterative solvers for weighted penalized logistic regression.

All methods share one driver, ``run``, with a parameter-change stopping rule
and a uniform per-iteration trace.  The monotone family (em, px_ecme, mm,
px_mm, gd with a safe steplength, gd_backtrack, gpx_ecme_pgd, aa1) never
decreases the penalized log-likelihood; newton is deliberately unsafeguarded
and may diverge, which the driver detects and records instead of crashing.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .model import Dataset, grad_loglik, nr_weight, penalized_loglik, pg_weight, weighted_loglik
from .numerics import RaySearchConfig, max_eigenvalue, ray_maximize, solve_spd
from .penalties import Penalty, scalar_quadratic_penalized_min

__all__ = [
    "SOLVER_KINDS",
    "SolverConfig",
    "SolveResult",
    "TraceRow",
    "AA1State",
    "em_step",
    "px_ecme_step",
    "newton_step",
    "mm_step",
    "px_mm_step",
    "gd_step",
    "gd_backtrack_step",
    "gpx_ecme_pgd_step",
    "aa1_step",
    "run",
]

SOLVER_KINDS = ("em", "px_ecme", "newton", "mm", "px_mm", "gd", "gd_backtrack",
                "gpx_ecme_pgd", "aa1")

# solvers whose update is a plain linear solve; they accept only quadratic penalties
_QUADRATIC_ONLY = ("em", "px_ecme", "newton", "mm", "px_mm", "aa1")

_DIVERGENCE_NORM = 1e8
_EIG_SAFETY = 1.0 + 1e-6


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rule ||beta_new - beta||_2 < tol, iteration budget, ray-search knobs."""

    tol: float = 1e-7
    max_iter: int = 100_000
    ray: RaySearchConfig = field(default_factory=RaySearchConfig)
    record_trace: bool = True

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter <= 0:
            raise ValueError("tol and max_iter must be positive")


class TraceRow(NamedTuple):
    iteration: int
    loglik: float
    penalized_loglik: float
    step_norm: float
    elapsed_sec: float


@dataclass
class SolveResult:
    beta_hat: np.ndarray
    iterations: int
    converged: bool
    final_penalized_loglik: float
    final_grad_norm: float
    trace: list
    divergence_flag: bool = False
    stalled: bool = False
    error: str | None = None
    gamma_hat: np.ndarray | None = None


@dataclass
class AA1State:
    """History for order-1 Anderson acceleration: previous accepted point and raw step output."""

    beta_prev: np.ndarray | None = None
    em_prev: np.ndarray | None = None


def penalized_ray_problem(d: Dataset, pen: Penalty, direction):
    """Objective and derivative of rho -> penalized loglik at rho * direction.

    The derivative is returned as None for SCAD, whose kinks make root-finding
    along the ray unreliable; ray_maximize then falls back to its
    derivative-free search.
    """
    direction = np.asarray(direction, dtype=float)
    eta0 = d.X @ direction
    sy_eta_sum = float(np.sum(d.s * d.y * eta0))
    sm = d.s * d.m
    const = d.log_binom_const

    def f(rho):
        return const + rho * sy_eta_sum \
            - float(np.sum(sm * np.logaddexp(0.0, rho * eta0))) \
            - pen.ray_value(direction, rho)

    if pen.kind == "scad":
        return f, None

    s_eta = d.s * eta0

    def fprime(rho):
        return float(np.sum(s_eta * (d.y - d.m * expit(rho * eta0)))) \
            - pen.ray_derivative(direction, rho)

    return f, fprime


class _Workspace:
    """Per-solve precomputation shared by the step rules."""

    def __init__(self, d: Dataset, pen: Penalty):
        self.d = d
        self.pen = pen
        self.Xs = d.X * d.s[:, None]
        self.XtSu = self.Xs.T @ d.u
        self.pen_mask = pen._mask(d.p) if pen.kind == "l2" else None
        self._XtSX = None

    @property
    def XtSX(self):
        if self._XtSX is None:
            self._XtSX = self.Xs.T @ self.d.X
        return self._XtSX

    def weighted_gram(self, w):
        """X' S diag(w) X."""
        return (self.Xs * w[:, None]).T @ self.d.X

    def grad(self, eta):
        return self.Xs.T @ (self.d.y - self.d.m * expit(eta))

    def em_solve(self, beta):
        w = pg_weight(self.d.X @ beta, self.d.m)
        H = self.weighted_gram(w)
        if self.pen.kind == "l2":
            H = H + np.diag(self.pen.lambda2 * self.pen_mask)
        return solve_spd(H, self.XtSu)

    def scale_search(self, direction, ray_cfg):
        if not np.any(direction):
            return 1.0
        f, fprime = penalized_ray_problem(self.d, self.pen, direction)
        rho, _ = ray_maximize(f, ray_cfg, fprime=fprime)
        return rho

    def kappa(self, rule, beta):
        """MM majorization constant: the weight bound hidden in H = X'S[kappa I - W]X."""
        if rule == "quarter":
            return 0.25
        return float(np.max(pg_weight(self.d.X @ beta, self.d.m)))

    def mm_solve(self, beta, kappa):
        eta = self.d.X @ beta
        g = self.Xs.T @ (self.d.y - self.d.m * expit(eta))
        if self.pen.kind == "l2":
            lam_diag = self.pen.lambda2 * self.pen_mask
            g = g - lam_diag * beta
            M = self.XtSX + np.diag(lam_diag / kappa)
        else:
            M = self.XtSX
        return beta + solve_spd(M, g) / kappa


def _require_quadratic(kind: str, pen: Penalty):
    if kind in _QUADRATIC_ONLY and not pen.is_quadratic:
        raise ValueError(
            f"{kind} needs a closed-form quadratic M-step (penalty 'none' or 'l2'); "
            f"use gpx_ecme_pgd or coordinate descent for {pen.kind!r}")


def _require_quarter_ok(rule: str, d: Dataset):
    if rule not in ("max_weight", "quarter"):
        raise ValueError(f"unknown kappa rule {rule!r}")
    if rule == "quarter" and np.any(d.m != 1):
        raise ValueError("the quarter steplength rule is only valid when all m_i = 1")


def em_step(d: Dataset, beta, pen: Penalty) -> np.ndarray:
    """One EM update: weighted least squares with Polya-Gamma weights.

    Solves (X'S W(beta) X + lambda2 I_pen) beta_new = X'S u, an ascent step of
    the penalized log-likelihood for the quadratic penalty kinds.
    """
    _require_quadratic("em", pen)
    return _Workspace(d, pen).em_solve(np.asarray(beta, dtype=float))


def px_ecme_step(d: Dataset, beta, pen: Penalty, ray_cfg: RaySearchConfig | None = None) -> np.ndarray:
    """EM update followed by the optimal rescaling of the whole coefficient vector."""
    _require_quadratic("px_ecme", pen)
    ws = _Workspace(d, pen)
    bem = ws.em_solve(np.asarray(beta, dtype=float))
    return ws.scale_search(bem, ray_cfg) * bem


def newton_step(d: Dataset, beta, pen: Penalty) -> np.ndarray:
    """One Newton-Raphson/Fisher-scoring update.  Unsafeguarded by design."""
    _require_quadratic("newton", pen)
    beta = np.asarray(beta, dtype=float)
    ws = _Workspace(d, pen)
    eta = d.X @ beta
    H = ws.weighted_gram(nr_weight(eta, d.m))
    g = ws.grad(eta)
    if pen.kind == "l2":
        lam_diag = pen.lambda2 * ws.pen_mask
        H = H + np.diag(lam_diag)
        g = g - lam_diag * beta
    return beta + solve_spd(H, g)


def mm_step(d: Dataset, beta, pen: Penalty, kappa_rule: str = "max_weight") -> np.ndarray:
    """MM update beta + (1/kappa) (X'S X + (lambda2/kappa) I_pen)^-1 grad(pen. loglik).

    kappa is either the running maximum of the Polya-Gamma weights or the
    global bound 1/4 (valid only when every m_i = 1).
    """
    _require_quadratic("mm", pen)
    _require_quarter_ok(kappa_rule, d)
    beta = np.asarray(beta, dtype=float)
    ws = _Workspace(d, pen)
    return ws.mm_solve(beta, ws.kappa(kappa_rule, beta))


def px_mm_step(d: Dataset, beta, pen: Penalty, ray_cfg: RaySearchConfig | None = None,
               kappa_rule: str = "max_weight") -> np.ndarray:
    """MM update followed by the optimal rescaling."""
    _require_quadratic("px_mm", pen)
    _require_quarter_ok(kappa_rule, d)
    beta = np.asarray(beta, dtype=float)
    ws = _Workspace(d, pen)
    bgem = ws.mm_solve(beta, ws.kappa(kappa_rule, beta))
    return ws.scale_search(bgem, ray_cfg) * bgem


def gd_step(d: Dataset, beta, pen: Penalty, kappa: float) -> np.ndarray:
    """Proximal gradient ascent step prox_{kappa P}(beta + kappa grad loglik)."""
    if kappa <= 0:
        raise ValueError("steplength kappa must be positive")
    beta = np.asarray(beta, dtype=float)
    z = beta + kappa * grad_loglik(d, beta)
    if pen.kind == "none":
        return z
    return pen.prox(z, kappa)


def gd_backtrack_step(d: Dataset, beta, pen: Penalty, kappa0: float = 1.0):
    """Halve the steplength from kappa0 until the penalized objective increases.

    Returns (beta_new, kappa_accepted, stalled); after 60 halvings the input is
    returned unchanged with stalled = True.
    """
    beta = np.asarray(beta, dtype=float)
    base = penalized_loglik(d, beta, pen)
    g = grad_loglik(d, beta)
    kappa = kappa0
    for _ in range(60):
        z = beta + kappa * g
        cand = z if pen.kind == "none" else pen.prox(z, kappa)
        if penalized_loglik(d, cand, pen) > base:
            return cand, kappa, False
        kappa *= 0.5
    return beta.copy(), kappa, True


def _gpx_inner(ws: _Workspace, beta, kappa):
    """Maximizer of the surrogate with H = kappa^-1 I - X'S W X, coordinatewise."""
    d, pen = ws.d, ws.pen
    w = pg_weight(d.X @ beta, d.m)
    a = beta / kappa - ws.weighted_gram(w) @ beta
    lvec = ws.XtSu + a
    q = 1.0 / kappa
    if pen.kind in ("none", "l1", "l2", "elastic_net"):
        lam1 = pen.lambda1 if pen.kind in ("l1", "elastic_net") else 0.0
        lam2 = pen.lambda2 if pen.kind in ("l2", "elastic_net") else 0.0
        out = np.sign(lvec) * np.maximum(np.abs(lvec) - lam1, 0.0) / (q + lam2)
        for j in pen.exempt:
            if 0 <= j < out.size:
                out[j] = lvec[j] / q
        return out
    return np.array([scalar_quadratic_penalized_min(pen, q, l, index=j)
                     for j, l in enumerate(lvec)])


def gpx_ecme_pgd_step(d: Dataset, beta, pen: Penalty,
                      ray_cfg: RaySearchConfig | None = None) -> np.ndarray:
    """Proximal-gradient inner update with the spectral steplength, then rescaling.

    kappa_t = 1 / ((1 + 1e-6) lambda_max(X'S W(beta) X)) keeps the surrogate
    curvature correction positive semidefinite, so the step is monotone.
    """
    beta = np.asarray(beta, dtype=float)
    ws = _Workspace(d, pen)
    w = pg_weight(d.X @ beta, d.m)
    kappa = 1.0 / (_EIG_SAFETY * max_eigenvalue(ws.weighted_gram(w)))
    inner = _gpx_inner(ws, beta, kappa)
    return ws.scale_search(inner, ray_cfg) * inner


def aa1_step(d: Dataset, beta, pen: Penalty, state: AA1State):
    """Order-1 Anderson acceleration of the EM map.

    Combines the last two raw EM outputs with an adaptively chosen weight and
    keeps the combination only when it does not fall below the plain EM update
    in penalized log-likelihood.  Returns (beta_new, new_state).
    """
    _require_quadratic("aa1", pen)
    beta = np.asarray(beta, dtype=float)
    ws = _Workspace(d, pen)
    em_new = ws.em_solve(beta)
    if state.beta_prev is None or state.em_prev is None:
        return em_new, AA1State(beta_prev=beta, em_prev=em_new)
    r = em_new - beta
    v = em_new - beta + state.beta_prev - state.em_prev
    vv = float(v @ v)
    accepted = em_new
    if vv > 0.0:
        gamma = float(v @ r) / vv
        cand = (1.0 - gamma) * em_new + gamma * state.em_prev
        if penalized_loglik(d, cand, pen) >= penalized_loglik(d, em_new, pen):
            accepted = cand
    return accepted, AA1State(beta_prev=beta, em_prev=em_new)


class _Stepper:
    """Bind a solver kind to a workspace so run() pays precomputation once."""

    def __init__(self, d, pen, kind, cfg, kappa_rule):
        self.ws = _Workspace(d, pen)
        self.kind = kind
        self.ray = cfg.ray
        self.kappa_rule = kappa_rule
        self.aa_state = AA1State()
        self.gd_kappa = None
        self.bt_kappa = 1.0
        self.stalled = False
        if kind == "gd":
            bound = max_eigenvalue(self.ws.weighted_gram(0.25 * d.m))
            self.gd_kappa = 1.0 / (_EIG_SAFETY * bound)

    def step(self, beta):
        ws, kind = self.ws, self.kind
        if kind == "em":
            return ws.em_solve(beta)
        if kind == "px_ecme":
            bem = ws.em_solve(beta)
            return ws.scale_search(bem, self.ray) * bem
        if kind == "newton":
            return self._newton(beta)
        if kind == "mm":
            return ws.mm_solve(beta, ws.kappa(self.kappa_rule, beta))
        if kind == "px_mm":
            bgem = ws.mm_solve(beta, ws.kappa(self.kappa_rule, beta))
            return ws.scale_search(bgem, self.ray) * bgem
        if kind == "gd":
            z = beta + self.gd_kappa * (ws.grad(ws.d.X @ beta))
            return z if ws.pen.kind == "none" else ws.pen.prox(z, self.gd_kappa)
        if kind == "gd_backtrack":
            new, kappa, stalled = gd_backtrack_step(ws.d, beta, ws.pen,
                                                    kappa0=2.0 * self.bt_kappa)
            self.bt_kappa = kappa
            self.stalled = stalled
            return new
        if kind == "gpx_ecme_pgd":
            w = pg_weight(ws.d.X @ beta, ws.d.m)
            kappa = 1.0 / (_EIG_SAFETY * max_eigenvalue(ws.weighted_gram(w)))
            inner = _gpx_inner(ws, beta, kappa)
            return ws.scale_search(inner, self.ray) * inner
        if kind == "aa1":
            new, self.aa_state = aa1_step(ws.d, beta, ws.pen, self.aa_state)
            return new
        raise ValueError(f"unknown solver kind {kind!r}")

    def _newton(self, beta):
        ws = self.ws
        eta = ws.d.X @ beta
        H = ws.weighted_gram(nr_weight(eta, ws.d.m))
        g = ws.grad(eta)
        if ws.pen.kind == "l2":
            lam_diag = ws.pen.lambda2 * ws.pen_mask
            H = H + np.diag(lam_diag)
            g = g - lam_diag * beta
        return beta + solve_spd(H, g)


def run(d: Dataset, pen: Penalty, kind: str, beta0=None,
        cfg: SolverConfig | None = None, kappa_rule: str = "max_weight") -> SolveResult:
    """Iterate one solver until the parameter change drops below cfg.tol.

    The reported iteration count includes the final step that triggered the
    stopping rule.  Divergence (non-finite objective or ||beta|| > 1e8) and
    step failures are recorded on the result instead of raising.
    """
    cfg = cfg or SolverConfig()
    if kind not in SOLVER_KINDS:
        raise ValueError(f"unknown solver kind {kind!r}; expected one of {SOLVER_KINDS}")
    _require_quadratic(kind, pen)
    if kind in ("mm", "px_mm"):
        _require_quarter_ok(kappa_rule, d)

    beta = np.zeros(d.p) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    stepper = _Stepper(d, pen, kind, cfg, kappa_rule)

    ll = weighted_loglik(d, beta)
    pll = ll - pen.value(beta)
    trace = [TraceRow(0, ll, pll, 0.0, 0.0)] if cfg.record_trace else []
    result = SolveResult(beta_hat=beta, iterations=0, converged=False,
                         final_penalized_loglik=pll,
                         final_grad_norm=float(np.linalg.norm(grad_loglik(d, beta))),
                         trace=trace)

    for t in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter()
        try:
            beta_new = stepper.step(beta)
        except Exception as exc:  # singular solves and kin: report, do not abort
            result.error = f"{type(exc).__name__}: {exc}"
            result.iterations = t - 1
            break
        elapsed = time.perf_counter() - t0

        step_norm = float(np.linalg.norm(beta_new - beta))
        ll = weighted_loglik(d, beta_new)
        pll = ll - pen.value(beta_new)
        if cfg.record_trace:
            trace.append(TraceRow(t, ll, pll, step_norm, elapsed))
        beta = beta_new
        result.iterations = t

        if not np.all(np.isfinite(beta)) or np.linalg.norm(beta) > _DIVERGENCE_NORM \
                or not np.isfinite(pll):
            result.divergence_flag = True
            break
        if step_norm < cfg.tol:
            result.converged = True
            break

    result.beta_hat = beta
    result.stalled = stepper.stalled
    result.final_penalized_loglik = pll
    if np.all(np.isfinite(beta)):
        result.final_grad_norm = float(np.linalg.norm(grad_loglik(d, beta)))
    else:
        result.final_grad_norm = float("inf")
    return result
