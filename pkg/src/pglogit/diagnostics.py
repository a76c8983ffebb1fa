"""Convergence-rate diagnostics: Jacobians of the EM and PX fixed-point maps.

At an interior maximum beta* of the unpenalized weighted log-likelihood, the
EM map has Jacobian I - (X'S W X)^-1 X'S R X with R = diag(m pi (1 - pi)),
and the rescaled map subtracts a rank-one correction along beta*.  The
spectral radius of each Jacobian is the local linear convergence rate; the
rescaled map is never slower.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Dataset, grad_loglik, nr_weight, pg_weight
from .numerics import RaySearchConfig
from .penalties import Penalty
from .solvers import SolverConfig, em_step, px_ecme_step, run

__all__ = [
    "JacobianReport",
    "SeparationError",
    "jacobian_em_analytic",
    "jacobian_px_analytic",
    "fd_jacobian",
    "spectral_radius",
    "verify_rate_ordering",
]

_FD_REL_STEP = 1e-5


class SeparationError(RuntimeError):
    """The likelihood has no finite maximizer (separated data), so rates are undefined."""


@dataclass(frozen=True)
class JacobianReport:
    beta_star: np.ndarray
    J_em: np.ndarray
    J_px: np.ndarray
    J_em_fd: np.ndarray
    J_px_fd: np.ndarray
    r_em: float
    r_px: float
    fd_agreement: float  # max elementwise |analytic - finite difference|


def _em_px_matrices(d: Dataset, beta_star):
    beta_star = np.asarray(beta_star, dtype=float)
    eta = d.X @ beta_star
    Xs = d.X * d.s[:, None]
    E = (Xs * pg_weight(eta, d.m)[:, None]).T @ d.X
    V = (Xs * nr_weight(eta, d.m)[:, None]).T @ d.X
    return E, V


def jacobian_em_analytic(d: Dataset, beta_star) -> np.ndarray:
    """I - (X'S W X)^-1 X'S R X evaluated at beta_star."""
    E, V = _em_px_matrices(d, beta_star)
    return np.eye(d.p) - np.linalg.solve(E, V)


def jacobian_px_analytic(d: Dataset, beta_star) -> np.ndarray:
    """EM Jacobian minus the rank-one ray correction c^-1 b b' V (V^-1 - E^-1) V'."""
    beta_star = np.asarray(beta_star, dtype=float)
    if not np.any(beta_star):
        raise ValueError("the ray correction is undefined at beta_star = 0")
    E, V = _em_px_matrices(d, beta_star)
    J_em = np.eye(d.p) - np.linalg.solve(E, V)
    c = float(beta_star @ V @ beta_star)
    M = V - V @ np.linalg.solve(E, V)   # equals V (V^-1 - E^-1) V'
    return J_em - np.outer(beta_star, beta_star) @ M / c


def fd_jacobian(step_map, beta_star, rel_step: float = _FD_REL_STEP) -> np.ndarray:
    """Central finite differences of a map R^p -> R^p, column j per coordinate."""
    beta_star = np.asarray(beta_star, dtype=float)
    p = beta_star.size
    J = np.empty((p, p))
    for j in range(p):
        h = rel_step * max(1.0, abs(beta_star[j]))
        ej = np.zeros(p)
        ej[j] = h
        J[:, j] = (step_map(beta_star + ej) - step_map(beta_star - ej)) / (2.0 * h)
    return J


def spectral_radius(J) -> float:
    """Largest eigenvalue modulus of a general real matrix (QR algorithm via LAPACK)."""
    J = np.asarray(J, dtype=float)
    if not np.all(np.isfinite(J)):
        raise ValueError("matrix has non-finite entries")
    return float(np.max(np.abs(np.linalg.eigvals(J))))


def _solve_to_optimum(d: Dataset, tol: float, max_iter: int):
    pen = Penalty.none()
    res = run(d, pen, "px_ecme", beta0=np.zeros(d.p),
              cfg=SolverConfig(tol=tol, max_iter=max_iter, record_trace=False))
    beta = res.beta_hat
    gnorm = float(np.linalg.norm(grad_loglik(d, beta)))
    if res.divergence_flag or (np.linalg.norm(beta) > 1e4 and gnorm > 1e-6):
        raise SeparationError(
            "iterates grew without the gradient vanishing; the maximum likelihood "
            "estimate appears non-finite (separated data)")
    if not res.converged or gnorm >= 1e-8:
        raise SeparationError(
            f"no interior optimum reached (grad norm {gnorm:.2e}); rate diagnostics "
            "require a converged unpenalized solve")
    return beta


def verify_rate_ordering(d: Dataset, tol: float = 1e-11, max_iter: int = 200_000,
                         fd_tol: float = 1e-3, rate_slack: float = 1e-8) -> JacobianReport:
    """Solve to beta*, build analytic and finite-difference Jacobians, check the rate ordering.

    Raises if the finite differences of the actual step maps disagree with the
    analytic formulas beyond fd_tol, or if the rescaled map's spectral radius
    exceeds the EM one by more than rate_slack.
    """
    beta_star = _solve_to_optimum(d, tol, max_iter)
    pen = Penalty.none()
    # tight ray tolerance keeps line-search noise below the finite-difference step
    ray = RaySearchConfig(tol=1e-12)

    J_em = jacobian_em_analytic(d, beta_star)
    J_px = jacobian_px_analytic(d, beta_star)
    J_em_fd = fd_jacobian(lambda b: em_step(d, b, pen), beta_star)
    J_px_fd = fd_jacobian(lambda b: px_ecme_step(d, b, pen, ray_cfg=ray), beta_star)

    fd_agreement = float(max(np.max(np.abs(J_em - J_em_fd)), np.max(np.abs(J_px - J_px_fd))))
    report = JacobianReport(
        beta_star=beta_star, J_em=J_em, J_px=J_px, J_em_fd=J_em_fd, J_px_fd=J_px_fd,
        r_em=spectral_radius(J_em), r_px=spectral_radius(J_px), fd_agreement=fd_agreement)
    if fd_agreement >= fd_tol:
        raise AssertionError(
            f"finite-difference Jacobians disagree with the analytic forms "
            f"(max deviation {fd_agreement:.3e} >= {fd_tol:g})")
    if report.r_px > report.r_em + rate_slack:
        raise AssertionError(
            f"rate ordering violated: r_px {report.r_px:.6f} > r_em {report.r_em:.6f}")
    return report
