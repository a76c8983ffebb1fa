"""Separable penalties and their exact univariate quadratic-plus-penalty minimizers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Penalty", "scalar_quadratic_penalized_min"]

_KINDS = ("none", "l1", "l2", "elastic_net", "scad")


@dataclass(frozen=True)
class Penalty:
    """Separable penalty P(beta) = sum_j P_j(beta_j).

    Variants: none, l1 (lambda1 * |b|), l2 (lambda2/2 * b^2),
    elastic_net (lambda1 * |b| + lambda2/2 * b^2) and the three-piece SCAD
    with scale ``lambda1`` and shape ``scad_a``.  Coordinates listed in
    ``exempt`` receive no penalty.
    """

    kind: str = "none"
    lambda1: float = 0.0
    lambda2: float = 0.0
    scad_a: float = 3.7
    exempt: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("penalty strengths must be nonnegative")
        if self.kind == "scad" and self.scad_a <= 2:
            raise ValueError("SCAD shape parameter must exceed 2")
        object.__setattr__(self, "exempt", frozenset(int(j) for j in self.exempt))

    @classmethod
    def none(cls) -> "Penalty":
        return cls(kind="none")

    @classmethod
    def l1(cls, lam: float, exempt=()) -> "Penalty":
        return cls(kind="l1", lambda1=lam, exempt=frozenset(exempt))

    @classmethod
    def l2(cls, lam: float, exempt=()) -> "Penalty":
        return cls(kind="l2", lambda2=lam, exempt=frozenset(exempt))

    @classmethod
    def elastic_net(cls, lam1: float, lam2: float, exempt=()) -> "Penalty":
        return cls(kind="elastic_net", lambda1=lam1, lambda2=lam2, exempt=frozenset(exempt))

    @classmethod
    def scad(cls, lam: float, a: float = 3.7, exempt=()) -> "Penalty":
        return cls(kind="scad", lambda1=lam, scad_a=a, exempt=frozenset(exempt))

    @property
    def is_quadratic(self) -> bool:
        """True when the penalty keeps the M-step an unmodified linear solve."""
        return self.kind in ("none", "l2")

    def _mask(self, p: int) -> np.ndarray:
        # 1.0 for penalized coordinates, 0.0 for exempt ones
        mask = np.ones(p)
        for j in self.exempt:
            if 0 <= j < p:
                mask[j] = 0.0
        return mask

    def _componentwise(self, b: np.ndarray) -> np.ndarray:
        if self.kind == "none":
            return np.zeros_like(b)
        ab = np.abs(b)
        if self.kind == "l1":
            return self.lambda1 * ab
        if self.kind == "l2":
            return 0.5 * self.lambda2 * b * b
        if self.kind == "elastic_net":
            return self.lambda1 * ab + 0.5 * self.lambda2 * b * b
        lam, a = self.lambda1, self.scad_a
        inner = lam * ab
        middle = (2 * a * lam * ab - b * b - lam * lam) / (2 * (a - 1))
        outer = (a + 1) * lam * lam / 2
        return np.where(ab <= lam, inner, np.where(ab <= a * lam, middle, outer))

    def value(self, beta) -> float:
        """P(beta), with exempt coordinates contributing zero."""
        b = np.asarray(beta, dtype=float).ravel()
        return float(np.sum(self._mask(b.size) * self._componentwise(b)))

    def ray_value(self, beta, rho: float) -> float:
        """P(rho * beta)."""
        return self.value(rho * np.asarray(beta, dtype=float))

    def ray_derivative(self, beta, rho: float) -> float:
        """d/drho P(rho * beta), defined away from the kinks (rho != 0 for l1-type)."""
        b = np.asarray(beta, dtype=float).ravel()
        mask = self._mask(b.size)
        t = rho * b
        out = 0.0
        if self.kind in ("l1", "elastic_net"):
            out += self.lambda1 * np.sign(rho) * np.sum(mask * np.abs(b))
        if self.kind in ("l2", "elastic_net"):
            out += self.lambda2 * rho * np.sum(mask * b * b)
        if self.kind == "scad":
            lam, a = self.lambda1, self.scad_a
            at = np.abs(t)
            dP = lam * np.where(at <= lam, 1.0, np.maximum(a * lam - at, 0.0) / ((a - 1) * lam))
            out += np.sum(mask * dP * np.sign(t) * b)
        return float(out)

    def prox(self, z, kappa: float) -> np.ndarray:
        """Proximal operator of kappa * P: argmin_b (1/2k)(b - z)^2 + P_j(b), per coordinate.

        For the 'none' kind (and exempt coordinates) this is the identity.
        """
        z = np.asarray(z, dtype=float)
        if self.kind == "none":
            return z.copy()
        if self.kind in ("l1", "l2", "elastic_net"):
            out = (np.sign(z) * np.maximum(np.abs(z) - kappa * self.lambda1, 0.0)
                   / (1.0 + kappa * self.lambda2))
        else:
            out = np.array([scalar_quadratic_penalized_min(self, 1.0 / kappa, zj / kappa)
                            for zj in z])
        for j in self.exempt:
            if 0 <= j < z.size:
                out[j] = z[j]
        return out


def _soft(l: float, thresh: float) -> float:
    return float(np.sign(l) * max(abs(l) - thresh, 0.0))


def scalar_quadratic_penalized_min(pen: Penalty, q: float, l: float, index: int | None = None) -> float:
    """Global minimizer of (q/2) b^2 - l b + P_j(b) for one coordinate.

    ``index`` selects the coordinate so exempt entries fall back to the
    unpenalized minimum l/q.  Curvature q must be positive.  The convex kinds
    have closed forms; SCAD is minimized by enumerating the stationary point of
    each piece together with the piece boundaries.
    """
    if q <= 0:
        raise ValueError("curvature q must be positive")
    kind = pen.kind
    if index is not None and index in pen.exempt:
        kind = "none"
    if kind == "none":
        return l / q
    if kind == "l1":
        return _soft(l, pen.lambda1) / q
    if kind == "l2":
        return l / (q + pen.lambda2)
    if kind == "elastic_net":
        return _soft(l, pen.lambda1) / (q + pen.lambda2)

    lam, a = pen.lambda1, pen.scad_a
    if lam == 0.0:
        return l / q

    def scad_val(b):
        ab = abs(b)
        if ab <= lam:
            return lam * ab
        if ab <= a * lam:
            return (2 * a * lam * ab - b * b - lam * lam) / (2 * (a - 1))
        return (a + 1) * lam * lam / 2

    def obj(b):
        return 0.5 * q * b * b - l * b + scad_val(b)

    cands = [0.0, lam, -lam, a * lam, -a * lam]
    # inner piece: quadratic plus lam|b|
    b1 = _soft(l, lam) / q
    cands.append(float(np.clip(b1, -lam, lam)))
    # middle piece: curvature q - 1/(a-1); stationary candidate per sign, clipped
    # into the piece (negative curvature puts the minimum on a boundary)
    curv = q - 1.0 / (a - 1)
    if curv > 0:
        for sgn in (1.0, -1.0):
            b2 = (l - sgn * a * lam / (a - 1)) / curv
            if sgn * b2 > 0:
                cands.append(sgn * min(max(sgn * b2, lam), a * lam))
    # outer piece: penalty constant
    b3 = l / q
    if abs(b3) > a * lam:
        cands.append(b3)
    return min(cands, key=obj)
