"""Variational-inequality view of the split problem.

With ``w = (z, x, lam)`` and ``u = (z, x)`` a saddle point ``w*`` of the
Lagrangian ``||z||_1 + (alpha/2)||y - Mx||^2 - lam^T (Dx - z)`` is exactly a
point with

    theta(u) - theta(u*) + (w - w*)^T F(w*) >= 0   for all w,

where ``theta(u) = ||z||_1 + (alpha/2)||y - Mx||^2`` and
``F(w) = (lam, -D^T lam, Dx - z)``.  ``F`` is linear with a skew-symmetric
matrix, so ``(w - w')^T (F(w) - F(w')) == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, NumericError
from .problem import ProblemInstance

ZERO_TOL = 1e-9
GAP_AGREEMENT_TOL = 1e-9
PROBE_RADII = (0.1, 1.0, 10.0)


@dataclass(frozen=True, eq=False)
class ViPoint:
    """A primal-dual triple ``(z, x, lam)``."""

    z: np.ndarray
    x: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        for name in ("z", "x", "lam"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())

    @property
    def u(self) -> tuple[np.ndarray, np.ndarray]:
        return self.z, self.x

    @property
    def v(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lam, self.x

    def flat(self) -> np.ndarray:
        return np.concatenate([self.z, self.x, self.lam])

    @classmethod
    def from_flat(cls, w: np.ndarray, n: int, d: int) -> "ViPoint":
        return cls(w[:n], w[n:n + d], w[n + d:])

    def dot(self, other: "ViPoint") -> float:
        return float(self.z @ other.z + self.x @ other.x + self.lam @ other.lam)

    def __add__(self, other: "ViPoint") -> "ViPoint":
        return ViPoint(self.z + other.z, self.x + other.x, self.lam + other.lam)

    def __sub__(self, other: "ViPoint") -> "ViPoint":
        return ViPoint(self.z - other.z, self.x - other.x, self.lam - other.lam)

    def __mul__(self, a: float) -> "ViPoint":
        return ViPoint(a * self.z, a * self.x, a * self.lam)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.sqrt(self.dot(self)))

    def check_dims(self, instance: ProblemInstance) -> None:
        if (self.z.size, self.x.size, self.lam.size) != (instance.n, instance.d, instance.n):
            raise InvalidDimensionError(
                f"point has (|z|, |x|, |lam|) = ({self.z.size}, {self.x.size}, {self.lam.size}); "
                f"instance needs ({instance.n}, {instance.d}, {instance.n})"
            )

    @classmethod
    def zeros(cls, instance: ProblemInstance) -> "ViPoint":
        return cls(np.zeros(instance.n), np.zeros(instance.d), np.zeros(instance.n))


@dataclass(frozen=True)
class KktResiduals:
    r_subgrad: float
    r_stationarity: float
    r_feasibility: float

    def max(self) -> float:
        return max(self.r_subgrad, self.r_stationarity, self.r_feasibility)

    def certified(self, tol: float) -> bool:
        return self.max() <= tol

    def to_dict(self) -> dict:
        return {
            "r_subgrad": self.r_subgrad,
            "r_stationarity": self.r_stationarity,
            "r_feasibility": self.r_feasibility,
        }


def theta(z, x, instance: ProblemInstance) -> float:
    r = instance.y - instance.M @ np.asarray(x, dtype=float)
    return float(np.abs(z).sum() + 0.5 * instance.alpha * (r @ r))


def F_apply(w: ViPoint, instance: ProblemInstance) -> ViPoint:
    D = instance.D
    return ViPoint(w.lam.copy(), -(D.T @ w.lam), D @ w.x - w.z)


def skew_defect(w: ViPoint, w_bar: ViPoint, instance: ProblemInstance) -> float:
    """``|(w - w_bar)^T (F(w) - F(w_bar))|``; zero up to roundoff."""
    return abs((w - w_bar).dot(F_apply(w, instance) - F_apply(w_bar, instance)))


def kkt_residuals(w: ViPoint, instance: ProblemInstance, zero_tol: float = ZERO_TOL) -> KktResiduals:
    """Violations of the three first-order saddle-point conditions.

    ``-lam`` must be a subgradient of ``||.||_1`` at ``z``; ``x`` must be
    stationary for ``(alpha/2)||y - Mx||^2 - lam^T D x``; and ``Dx = z``.
    Entries with ``|z_j| <= zero_tol`` are treated as zeros.
    """
    w.check_dims(instance)
    D, M = instance.D, instance.M
    nonzero = np.abs(w.z) > zero_tol
    sub = np.where(nonzero, np.abs(w.lam + np.sign(w.z)), np.maximum(0.0, np.abs(w.lam) - 1.0))
    grad = instance.alpha * (M.T @ (M @ w.x - instance.y)) - D.T @ w.lam
    return KktResiduals(
        r_subgrad=float(np.max(sub, initial=0.0)),
        r_stationarity=float(np.max(np.abs(grad), initial=0.0)),
        r_feasibility=float(np.max(np.abs(D @ w.x - w.z), initial=0.0)),
    )


def vi_gap_probe(cand: ViPoint, probe: ViPoint, instance: ProblemInstance) -> float:
    """``theta(u_probe) - theta(u_cand) + (w_probe - w_cand)^T F(w_probe)``.

    The same quantity with ``F(w_cand)`` in place of ``F(w_probe)`` is computed
    as a cross-check; the two must agree because ``F`` is skew.  Nonnegative
    for every probe iff ``cand`` solves the variational inequality.
    """
    dtheta = theta(probe.z, probe.x, instance) - theta(cand.z, cand.x, instance)
    diff = probe - cand
    at_probe = diff.dot(F_apply(probe, instance))
    at_cand = diff.dot(F_apply(cand, instance))
    scale = 1.0 + abs(dtheta) + abs(at_probe) + diff.dot(diff)
    if abs(at_probe - at_cand) > GAP_AGREEMENT_TOL * scale:
        raise NumericError(f"gap forms disagree: {at_probe!r} vs {at_cand!r}")
    return dtheta + at_probe


def sphere_probes(center: ViPoint, count: int, gen: np.random.Generator, radii=PROBE_RADII) -> list[ViPoint]:
    """``count`` points uniform on spheres about ``center``, cycling ``radii``."""
    base = center.flat()
    n, d = center.z.size, center.x.size
    out = []
    for i in range(count):
        g = gen.standard_normal(base.size)
        g *= radii[i % len(radii)] / np.linalg.norm(g)
        out.append(ViPoint.from_flat(base + g, n, d))
    return out
