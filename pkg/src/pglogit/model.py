"""Data model and likelihood-level quantities for weighted binomial logistic regression.

The model is y_i ~ Binomial(m_i, expit(x_i' beta)) with nonnegative observation
weights s_i multiplying each term of the log-likelihood.  Two weight functions
drive the iterative solvers: the Polya-Gamma conditional expectation
omega(z, m) = (m / 2z) * tanh(z / 2) and the Newton/Fisher weight
m * pi(z) * (1 - pi(z)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln

__all__ = [
    "Dataset",
    "LinkQuantities",
    "pg_weight",
    "nr_weight",
    "weighted_loglik",
    "penalized_loglik",
    "grad_loglik",
    "link_quantities",
]

# Below this |z|, (m/2z)tanh(z/2) is evaluated by its Taylor expansion to avoid
# 0/0 cancellation.
_PG_TAYLOR_CUTOFF = 1e-4


def _softplus(z):
    # log(1 + exp(z)) without overflow for large |z|
    return np.logaddexp(0.0, z)


@dataclass(frozen=True)
class Dataset:
    """A weighted binomial regression problem.

    X : (n, p) design matrix, rows are observations.  Column 0 is conventionally
        an intercept column of ones, but this is not enforced.
    y : (n,) nonnegative integer success counts, 0 <= y_i <= m_i.
    m : (n,) positive integer trial counts.
    s : (n,) nonnegative observation weights, at least one strictly positive.
    """

    X: np.ndarray
    y: np.ndarray
    m: np.ndarray
    s: np.ndarray
    log_binom_const: float = field(init=False, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        m = np.asarray(self.m, dtype=float).ravel()
        s = np.asarray(self.s, dtype=float).ravel()
        n = X.shape[0]
        if y.shape != (n,) or m.shape != (n,) or s.shape != (n,):
            raise ValueError(f"inconsistent lengths: X has {n} rows, y {y.shape}, m {m.shape}, s {s.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if np.any(m < 1) or np.any(m != np.round(m)):
            raise ValueError("trial counts m must be integers >= 1")
        if np.any(y < 0) or np.any(y > m) or np.any(y != np.round(y)):
            raise ValueError("counts y must be integers with 0 <= y_i <= m_i")
        if np.any(s < 0) or not np.any(s > 0):
            raise ValueError("weights s must be nonnegative with at least one positive entry")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "s", s)
        const = float(np.sum(s * (gammaln(m + 1) - gammaln(y + 1) - gammaln(m - y + 1))))
        object.__setattr__(self, "log_binom_const", const)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def u(self) -> np.ndarray:
        """Centered response y - m/2."""
        return self.y - 0.5 * self.m

    @classmethod
    def bernoulli(cls, X, y, s=None) -> "Dataset":
        """Convenience constructor for 0/1 outcomes (all m_i = 1)."""
        y = np.asarray(y, dtype=float).ravel()
        if s is None:
            s = np.ones_like(y)
        return cls(X=X, y=y, m=np.ones_like(y), s=s)


@dataclass(frozen=True)
class LinkQuantities:
    """Linear predictor and the derived per-observation quantities."""

    eta: np.ndarray   # X beta
    mu: np.ndarray    # m * expit(eta)
    w_em: np.ndarray  # Polya-Gamma weights omega(eta, m)
    w_nr: np.ndarray  # Newton weights m * pi * (1 - pi)


def pg_weight(z, m):
    """Polya-Gamma mean weight omega(z, m) = (m / 2z) tanh(z / 2), with omega(0, m) = m/4.

    Even in z, strictly positive, and bounded above by m/4.  Near z = 0 the
    Taylor form m/4 - m z^2 / 48 is used.
    """
    z = np.asarray(z, dtype=float)
    m = np.asarray(m, dtype=float)
    small = np.abs(z) < _PG_TAYLOR_CUTOFF
    zsafe = np.where(small, 1.0, z)
    out = np.where(small, m / 4.0 - m * z * z / 48.0, m / (2.0 * zsafe) * np.tanh(zsafe / 2.0))
    if out.ndim == 0:
        return float(out)
    return out


def nr_weight(z, m):
    """Newton/Fisher weight m * pi(z) * (1 - pi(z)), evaluated as m t/(1+t)^2 with t = exp(-|z|)."""
    z = np.asarray(z, dtype=float)
    m = np.asarray(m, dtype=float)
    t = np.exp(-np.abs(z))
    out = m * t / (1.0 + t) ** 2
    if out.ndim == 0:
        return float(out)
    return out


def weighted_loglik(d: Dataset, beta) -> float:
    """Weighted observed-data log-likelihood, including the binomial coefficient term.

    sum_i s_i [ log C(m_i, y_i) + y_i x_i'beta - m_i log(1 + exp(x_i'beta)) ]
    """
    eta = d.X @ np.asarray(beta, dtype=float)
    return d.log_binom_const + float(np.sum(d.s * (d.y * eta - d.m * _softplus(eta))))


def penalized_loglik(d: Dataset, beta, pen) -> float:
    """weighted_loglik minus the penalty value."""
    return weighted_loglik(d, beta) - pen.value(beta)


def grad_loglik(d: Dataset, beta) -> np.ndarray:
    """Gradient of the weighted log-likelihood, X' S (y - mu)."""
    eta = d.X @ np.asarray(beta, dtype=float)
    mu = d.m * expit(eta)
    return d.X.T @ (d.s * (d.y - mu))


def link_quantities(d: Dataset, beta) -> LinkQuantities:
    """Evaluate eta, mu and both weight vectors at beta."""
    eta = d.X @ np.asarray(beta, dtype=float)
    return LinkQuantities(
        eta=eta,
        mu=d.m * expit(eta),
        w_em=pg_weight(eta, d.m),
        w_nr=nr_weight(eta, d.m),
    )
