"""Shared numerical kernels: SPD solves, dominant eigenvalues, 1-D ray maximization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.optimize import brentq, minimize_scalar

__all__ = [
    "RaySearchConfig",
    "LinearSolveError",
    "PowerIterationError",
    "solve_spd",
    "max_eigenvalue",
    "ray_maximize",
]

_JITTERS = (1e-10, 1e-8, 1e-6)


class LinearSolveError(RuntimeError):
    """Raised when an SPD system stays singular after jitter retries."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class PowerIterationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RaySearchConfig:
    """Controls for the 1-D maximization of rho -> f(rho) around rho = 1."""

    initial_bracket_halfwidth: float = 1.0
    max_expansions: int = 60
    tol: float = 1e-10
    max_iters: int = 200

    def __post_init__(self):
        if self.initial_bracket_halfwidth <= 0 or self.tol <= 0:
            raise ValueError("bracket halfwidth and tol must be positive")
        if self.max_expansions <= 0 or self.max_iters <= 0:
            raise ValueError("iteration limits must be positive")


def solve_spd(A, b, return_jitter: bool = False):
    """Solve A x = b for symmetric positive (semi)definite A by Cholesky.

    On factorization failure, retries with A + delta * I for
    delta in {1e-10, 1e-8, 1e-6} * trace(A)/p.  ``return_jitter=True`` also
    returns the delta that succeeded (0.0 when none was needed).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.trace(A) / max(A.shape[0], 1)
    for delta in (0.0,) + tuple(j * scale for j in _JITTERS):
        try:
            M = A if delta == 0.0 else A + delta * np.eye(A.shape[0])
            x = cho_solve(cho_factor(M, lower=True), b)
        except LinAlgError:
            continue
        if not np.all(np.isfinite(x)):
            continue
        return (x, delta) if return_jitter else x
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    denom = np.linalg.norm(b)
    resid = np.linalg.norm(A @ x - b) / (denom if denom > 0 else 1.0)
    raise LinearSolveError(
        f"matrix singular after jitter retries (relative residual {resid:.3e})",
        residual=resid,
    )


def max_eigenvalue(A, tol: float = 1e-8, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Deterministic seeded start vector; one Rayleigh-quotient refinement at the
    end.  The returned value never exceeds the true maximum, so callers wanting
    a safe upper bound multiply by (1 + 1e-6).
    """
    A = np.asarray(A, dtype=float)
    p = A.shape[0]
    v = np.random.default_rng(12345).standard_normal(p)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = A @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v_new = w / norm
        lam_new = float(v_new @ (A @ v_new))
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-300):
            return lam_new
        v, lam = v_new, lam_new
    raise PowerIterationError(f"power iteration did not converge in {max_iter} iterations")


def _expand_root_bracket(fprime, start, step, direction, max_expansions, floor=None):
    """Walk geometrically from ``start`` until fprime changes sign.

    Returns (lo, hi) with fprime(lo) >= 0 >= fprime(hi), or None.
    """
    a = start
    fa = fprime(a)
    h = step
    for _ in range(max_expansions):
        b = a + direction * h
        if floor is not None and b <= floor:
            b = floor
        fb = fprime(b)
        if np.isfinite(fb) and fa * fb <= 0:
            return (a, b) if a < b else (b, a)
        if floor is not None and b == floor:
            return None
        a, fa = b, fb
        h *= 2.0
    return None


def ray_maximize(f, cfg: RaySearchConfig | None = None, fprime=None):
    """Maximize f over the scalar rho, starting the search at rho = 1.

    When ``fprime`` is supplied and smooth on the relevant half-line, the
    stationarity equation fprime(rho) = 0 is bracketed by geometric expansion
    from 1 and solved with Brent root-finding to near machine precision.
    Otherwise (or on bracket failure) the maximum is located by expanding
    rho in {1, 1 +- h, 1 +- 2h, ...} and polishing with derivative-free Brent
    to tolerance ``cfg.tol``.

    The returned pair (rho_star, f(rho_star)) always satisfies
    f(rho_star) >= f(1): every evaluated point, including 1, is kept as a
    candidate and the best one wins.
    """
    cfg = cfg or RaySearchConfig()

    cand_rho = [1.0]
    cand_val = [f(1.0)]

    def consider(rho):
        val = f(rho)
        if np.isfinite(val):
            cand_rho.append(rho)
            cand_val.append(val)
        return val

    if fprime is not None:
        d1 = fprime(1.0)
        if not np.isfinite(d1) or d1 == 0.0:
            return 1.0, cand_val[0]
        direction = 1.0 if d1 > 0 else -1.0
        # keep to the positive half-line; l1-type penalties kink at rho = 0
        floor = 1e-12 if direction < 0 else None
        bracket = _expand_root_bracket(
            fprime, 1.0, cfg.initial_bracket_halfwidth, direction,
            cfg.max_expansions, floor=floor)
        if bracket is not None:
            try:
                root = brentq(fprime, bracket[0], bracket[1],
                              xtol=min(cfg.tol, 1e-13), maxiter=cfg.max_iters)
                consider(float(root))
                best = int(np.argmax(cand_val))
                return cand_rho[best], cand_val[best]
            except (ValueError, RuntimeError):
                pass
        elif direction < 0:
            consider(0.0)
        # no root bracketed: fall through to the derivative-free search

    # derivative-free: expand geometrically to bracket a maximum around 1
    h = cfg.initial_bracket_halfwidth
    for k in range(cfg.max_expansions):
        step = h * (2.0 ** k)
        lo_val = consider(1.0 - step)
        hi_val = consider(1.0 + step)
        interior = max(cand_val) > max(lo_val if np.isfinite(lo_val) else -np.inf,
                                       hi_val if np.isfinite(hi_val) else -np.inf)
        if interior and k >= 1:
            break

    order = np.argsort(cand_rho)
    rhos = np.asarray(cand_rho)[order]
    vals = np.asarray(cand_val)[order]
    ibest = int(np.argmax(vals))
    if 0 < ibest < len(rhos) - 1:
        a, b, c = rhos[ibest - 1], rhos[ibest], rhos[ibest + 1]
        try:
            res = minimize_scalar(lambda r: -f(r), bracket=(a, b, c), method="brent",
                                  options={"xtol": cfg.tol, "maxiter": cfg.max_iters})
            consider(float(res.x))
        except (ValueError, RuntimeError):
            pass

    best = int(np.argmax(cand_val))
    return cand_rho[best], cand_val[best]
