"""EM and PX-ECME for logistic regression with binary covariates under MAR missingness.

Covariate vectors are (1, z) with z in {0,1}^(p-1); their joint distribution is
a categorical over all 2^(p-1) configurations with cell probabilities gamma.
Missing entries are handled by exhaustive enumeration of the configurations
consistent with each observed row, so p is capped at 16.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, logsumexp

from .model import pg_weight
from .numerics import RaySearchConfig, ray_maximize, solve_spd
from .solvers import SolveResult, SolverConfig, TraceRow

__all__ = [
    "MissingDataset",
    "EStepQuantities",
    "configurations",
    "enumerate_consistent",
    "e_step",
    "m_step",
    "observed_loglik_missing",
    "px_solve_missing",
]

_MAX_P = 16


@dataclass(frozen=True)
class MissingDataset:
    """Binary-covariate regression data with missing entries marked as NaN.

    Column 0 of Xobs is the intercept (all ones, never missing); the remaining
    entries are 0, 1 or NaN.  y, m, s follow the fully observed Dataset rules.
    """

    Xobs: np.ndarray
    y: np.ndarray
    m: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.Xobs, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        m = np.asarray(self.m, dtype=float).ravel()
        s = np.asarray(self.s, dtype=float).ravel()
        n, p = X.shape
        if p > _MAX_P:
            raise ValueError(f"p = {p} exceeds the enumeration guard of {_MAX_P} "
                             f"(2^(p-1) configurations are enumerated)")
        if y.shape != (n,) or m.shape != (n,) or s.shape != (n,):
            raise ValueError("y, m, s must match the number of rows of Xobs")
        if np.any(np.isnan(X[:, 0])) or np.any(X[:, 0] != 1.0):
            raise ValueError("the intercept column must be fully observed and all ones")
        body = X[:, 1:]
        seen = body[~np.isnan(body)]
        if seen.size and not np.all((seen == 0.0) | (seen == 1.0)):
            raise ValueError("observed covariate entries must be binary")
        if np.any(m < 1) or np.any(m != np.round(m)):
            raise ValueError("trial counts m must be integers >= 1")
        if np.any(y < 0) or np.any(y > m):
            raise ValueError("counts y must satisfy 0 <= y_i <= m_i")
        if np.any(s < 0) or not np.any(s > 0):
            raise ValueError("weights s must be nonnegative with at least one positive entry")
        object.__setattr__(self, "Xobs", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "s", s)

    @property
    def n(self) -> int:
        return self.Xobs.shape[0]

    @property
    def p(self) -> int:
        return self.Xobs.shape[1]

    @property
    def n_configs(self) -> int:
        return 1 << (self.p - 1)

    @property
    def u(self) -> np.ndarray:
        return self.y - 0.5 * self.m


@dataclass(frozen=True)
class EStepQuantities:
    pik: np.ndarray  # (n, 2^(p-1)) posterior configuration probabilities
    a: np.ndarray    # (n, p) posterior covariate means, rows E[x_i | ...]
    B: np.ndarray    # (p, p) weighted sum of omega-weighted E[x x'] terms
    Gk: np.ndarray   # (2^(p-1),) weighted expected configuration counts


def configurations(p: int) -> np.ndarray:
    """All covariate configurations (1, z), z in {0,1}^(p-1), as a (2^(p-1), p) matrix.

    Configuration k has z_j = bit j-1 of k (little-endian over columns 1..p-1).
    """
    K = 1 << (p - 1)
    D = np.ones((K, p))
    ks = np.arange(K)
    for j in range(1, p):
        D[:, j] = (ks >> (j - 1)) & 1
    return D


def enumerate_consistent(xobs_row) -> np.ndarray:
    """Indices of the configurations matching the observed entries of one row."""
    row = np.asarray(xobs_row, dtype=float).ravel()
    base = 0
    free_bits = []
    for j in range(1, row.size):
        if np.isnan(row[j]):
            free_bits.append(j - 1)
        elif row[j] == 1.0:
            base |= 1 << (j - 1)
    idx = [base]
    for bit in free_bits:
        idx = idx + [k | (1 << bit) for k in idx]
    return np.array(sorted(idx), dtype=int)


class _Enumeration:
    """Padded per-row configuration indices so row sums vectorize."""

    def __init__(self, md: MissingDataset):
        self.D = configurations(md.p)
        rows = [enumerate_consistent(md.Xobs[i]) for i in range(md.n)]
        width = max(len(r) for r in rows)
        self.idx = np.zeros((md.n, width), dtype=int)
        self.mask = np.zeros((md.n, width), dtype=bool)
        for i, r in enumerate(rows):
            self.idx[i, :len(r)] = r
            self.mask[i, :len(r)] = True
        self.log_binom = (gammaln(md.m + 1) - gammaln(md.y + 1)
                          - gammaln(md.m - md.y + 1))

    def row_logjoint(self, md, eta_all, log_gamma):
        """(n, width) matrix of log p(y_i | d_k, beta) + log gamma_k on each A_i."""
        eta = eta_all[self.idx]
        terms = (self.log_binom[:, None] + md.y[:, None] * eta
                 - md.m[:, None] * np.logaddexp(0.0, eta) + log_gamma[self.idx])
        return np.where(self.mask, terms, -np.inf)


def e_step(md: MissingDataset, beta, gamma, _enum: _Enumeration | None = None) -> EStepQuantities:
    """Posterior configuration probabilities and the weighted M-step statistics.

    The omega weight is evaluated per configuration inside the expectation, so
    B accumulates s_i * m_i * omega(d_k' beta, 1) * p_ik * d_k d_k'.
    """
    enum = _enum or _Enumeration(md)
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    with np.errstate(divide="ignore"):
        log_gamma = np.log(gamma)
    eta_all = enum.D @ beta

    logpost = enum.row_logjoint(md, eta_all, log_gamma)
    norm = logsumexp(logpost, axis=1)
    bad = ~np.isfinite(norm)
    if np.any(bad):
        # no prior mass on any consistent configuration: fall back to uniform
        logpost[bad] = np.where(enum.mask[bad], 0.0, -np.inf)
        norm[bad] = logsumexp(logpost[bad], axis=1)
    post = np.exp(logpost - norm[:, None])

    n, K = md.n, md.n_configs
    pik = np.zeros((n, K))
    rows = np.repeat(np.arange(n), enum.mask.sum(axis=1))
    pik[rows, enum.idx[enum.mask]] = post[enum.mask]

    a = pik @ enum.D
    omega1 = pg_weight(eta_all, np.ones(K))
    ck = omega1 * (pik.T @ (md.s * md.m))
    B = (enum.D * ck[:, None]).T @ enum.D
    Gk = pik.T @ md.s
    return EStepQuantities(pik=pik, a=a, B=B, Gk=Gk)


def m_step(eq: EStepQuantities, md: MissingDataset):
    """Maximize the weighted Q-function: a linear solve for beta, counts for gamma."""
    beta_new = solve_spd(eq.B, eq.a.T @ (md.s * md.u))
    gamma_new = eq.Gk / np.sum(eq.Gk)
    return beta_new, gamma_new


def observed_loglik_missing(md: MissingDataset, beta, gamma,
                            _enum: _Enumeration | None = None) -> float:
    """Weighted log-likelihood of the observed data (y_i, x_i,obs).

    sum_i s_i log sum_{k in A_i} p(y_i | d_k, beta) gamma_k, evaluated with
    log-sum-exp.  For fully observed rows the inner sum collapses to one term
    and the value equals the complete-data weighted loglik plus the covariate
    model term sum_i s_i log p(x_i | gamma).
    """
    enum = _enum or _Enumeration(md)
    beta = np.asarray(beta, dtype=float)
    with np.errstate(divide="ignore"):
        log_gamma = np.log(np.asarray(gamma, dtype=float))
    eta_all = enum.D @ beta
    rowsum = logsumexp(enum.row_logjoint(md, eta_all, log_gamma), axis=1)
    return float(np.sum(md.s * rowsum))


def _grad_observed(md, enum, pik, beta):
    # gradient of the observed loglik in beta: posterior-weighted score terms
    eta_all = enum.D @ beta
    resid = md.y[:, None] - md.m[:, None] * expit(eta_all)[None, :]
    return enum.D.T @ ((pik * resid).T @ md.s)


def px_solve_missing(md: MissingDataset, beta0=None, gamma0=None,
                     cfg: SolverConfig | None = None, expansion: bool = True) -> SolveResult:
    """Iterate e_step/m_step, optionally rescaling each beta update along its ray.

    The rescaling maximizes the observed log-likelihood holding gamma at its
    fresh update; ``expansion=False`` gives the plain EM trajectory.  Stops on
    the parameter-change rule of cfg applied to beta.
    """
    cfg = cfg or SolverConfig()
    enum = _Enumeration(md)
    beta = np.zeros(md.p) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    gamma = (np.full(md.n_configs, 1.0 / md.n_configs) if gamma0 is None
             else np.asarray(gamma0, dtype=float).copy())
    if abs(np.sum(gamma) - 1.0) > 1e-8 or np.any(gamma < 0):
        raise ValueError("gamma0 must lie on the probability simplex")

    obj = observed_loglik_missing(md, beta, gamma, _enum=enum)
    trace = [TraceRow(0, obj, obj, 0.0, 0.0)] if cfg.record_trace else []
    result = SolveResult(beta_hat=beta, iterations=0, converged=False,
                         final_penalized_loglik=obj, final_grad_norm=np.nan,
                         trace=trace, gamma_hat=gamma)

    eq = None
    for t in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter()
        eq = e_step(md, beta, gamma, _enum=enum)
        beta_em, gamma = m_step(eq, md)
        if expansion and np.any(beta_em):
            log_gamma = np.log(np.maximum(gamma, 1e-300))
            eta_all0 = enum.D @ beta_em

            def f(rho):
                rowsum = logsumexp(enum.row_logjoint(md, rho * eta_all0, log_gamma), axis=1)
                return float(np.sum(md.s * rowsum))

            rho, _ = ray_maximize(f, cfg.ray)
            beta_new = rho * beta_em
        else:
            beta_new = beta_em
        step = float(np.linalg.norm(beta_new - beta))
        beta = beta_new
        obj = observed_loglik_missing(md, beta, gamma, _enum=enum)
        if cfg.record_trace:
            trace.append(TraceRow(t, obj, obj, step, time.perf_counter() - t0))
        result.iterations = t
        if step < cfg.tol:
            result.converged = True
            break

    result.beta_hat = beta
    result.gamma_hat = gamma
    result.final_penalized_loglik = obj
    if eq is not None:
        pik_final = e_step(md, beta, gamma, _enum=enum).pik
        result.final_grad_norm = float(np.linalg.norm(_grad_observed(md, enum, pik_final, beta)))
    return result
