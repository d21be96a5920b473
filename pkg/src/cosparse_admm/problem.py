"""Analysis-LASSO instances and cosparsity bookkeeping.

An instance encodes

    minimize  ||D x||_1 + (alpha / 2) ||y - M x||_2^2

which the solver splits as ``||z||_1 + (alpha/2)||y - Mx||^2`` subject to
``D x - z = 0``.  Index sets are 0-based throughout.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import seeding
from .errors import InfeasibleCosupportError, InvalidDimensionError, InvalidInputError
from .frame import DEFAULT_TOL, TightFrame, build_concatenated_bases_frame

SCHEMA = "cosparse-admm/instance/v1"
MAX_RETRIES = 32
NULL_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    M: np.ndarray
    y: np.ndarray
    frame: TightFrame
    alpha: float
    ground_truth: np.ndarray | None = None
    planted_cosupport: tuple[int, ...] | None = None

    def __post_init__(self):
        M = np.array(self.M, dtype=float, ndmin=2)
        y = np.array(self.y, dtype=float).ravel()
        M.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "y", y)
        if M.shape != (y.size, self.frame.d):
            raise InvalidDimensionError(
                f"M is {M.shape}; expected ({y.size}, {self.frame.d}) from len(y) and D"
            )
        if not self.alpha > 0:
            raise InvalidInputError(f"alpha must be positive, got {self.alpha}")
        object.__setattr__(self, "alpha", float(self.alpha))
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(y))):
            raise InvalidInputError("M and y must be finite")
        if self.ground_truth is not None:
            x = np.array(self.ground_truth, dtype=float).ravel()
            if x.size != self.frame.d:
                raise InvalidDimensionError(f"ground truth has length {x.size}, expected {self.frame.d}")
            x.setflags(write=False)
            object.__setattr__(self, "ground_truth", x)
        if self.planted_cosupport is not None:
            lam = tuple(sorted(int(j) for j in self.planted_cosupport))
            if lam and (lam[0] < 0 or lam[-1] >= self.frame.n):
                raise InvalidInputError("planted cosupport index out of range")
            object.__setattr__(self, "planted_cosupport", lam)
            if self.ground_truth is not None and lam:
                leak = np.max(np.abs(self.D[list(lam)] @ self.ground_truth))
                if leak > DEFAULT_TOL:
                    raise InvalidInputError(f"ground truth is not orthogonal to planted cosupport rows ({leak:.3e})")

    @property
    def D(self) -> np.ndarray:
        return self.frame.entries

    @property
    def m(self) -> int:
        return self.M.shape[0]

    @property
    def d(self) -> int:
        return self.frame.d

    @property
    def n(self) -> int:
        return self.frame.n

    def objective(self, x) -> float:
        """The unsplit objective ``||Dx||_1 + (alpha/2)||y - Mx||^2``."""
        x = np.asarray(x, dtype=float)
        r = self.y - self.M @ x
        return float(np.abs(self.D @ x).sum() + 0.5 * self.alpha * (r @ r))

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "M": self.M.tolist(),
            "y": self.y.tolist(),
            "alpha": self.alpha,
            "frame": self.frame.to_dict(),
            "ground_truth": None if self.ground_truth is None else self.ground_truth.tolist(),
            "planted_cosupport": None if self.planted_cosupport is None else list(self.planted_cosupport),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemInstance":
        if data.get("schema") != SCHEMA:
            raise InvalidInputError(f"unsupported instance schema {data.get('schema')!r}")
        return cls(
            M=np.asarray(data["M"], dtype=float),
            y=np.asarray(data["y"], dtype=float),
            frame=TightFrame.from_dict(data["frame"]),
            alpha=data["alpha"],
            ground_truth=None if data.get("ground_truth") is None else np.asarray(data["ground_truth"]),
            planted_cosupport=data.get("planted_cosupport"),
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ProblemInstance":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class CosupportResult:
    indices: tuple[int, ...]
    tol: float

    @property
    def cosparsity(self) -> int:
        return len(self.indices)


def _analysis(frame: TightFrame, x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != frame.d:
        raise InvalidInputError(f"x has length {x.size}, frame expects {frame.d}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("x must be finite")
    return frame.entries @ x


def cosupport(frame: TightFrame, x, tol: float = DEFAULT_TOL) -> CosupportResult:
    """Rows of ``D`` whose analysis coefficient has magnitude ``<= tol``."""
    if tol < 0:
        raise InvalidInputError(f"tol must be nonnegative, got {tol}")
    coef = _analysis(frame, x)
    return CosupportResult(tuple(int(j) for j in np.flatnonzero(np.abs(coef) <= tol)), tol)


def cosparsity(frame: TightFrame, x, tol: float = DEFAULT_TOL) -> int:
    return cosupport(frame, x, tol).cosparsity


def null_space(A: np.ndarray, rtol: float = NULL_RTOL) -> np.ndarray:
    """Orthonormal basis (as columns) of the null space of ``A`` via SVD."""
    d = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(d)
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    return Vt[rank:].T


def generate_cosparse_signal(frame: TightFrame, ell: int, seed: int, forced=None, max_retries: int = MAX_RETRIES):
    """Unit-norm ``x`` orthogonal to a random set of ``ell`` rows of ``D``.

    Returns ``(x, indices)``.  The row set is redrawn up to ``max_retries``
    times while it has full column rank.  Passing ``forced`` fixes the row
    set (test hook).
    """
    n = frame.n
    if ell < 0:
        raise InvalidInputError(f"ell must be nonnegative, got {ell}")
    if ell > n:
        raise InfeasibleCosupportError(f"ell={ell} exceeds the number of frame rows n={n}")
    pick = seeding.rng(seed, seeding.COSUPPORT)
    draw = seeding.rng(seed, seeding.SIGNAL)
    attempts = 1 if forced is not None else max_retries
    for _ in range(attempts):
        if forced is not None:
            lam = np.array(sorted(int(j) for j in forced), dtype=int)
            if lam.size != ell:
                raise InvalidInputError(f"forced cosupport has {lam.size} indices, ell={ell}")
        else:
            lam = np.sort(pick.choice(n, size=ell, replace=False))
        basis = null_space(frame.entries[lam])
        if basis.shape[1] == 0:
            continue
        g = draw.standard_normal(frame.d)
        x = basis @ (basis.T @ g)
        x /= np.linalg.norm(x)
        return x, tuple(int(j) for j in lam)
    raise InfeasibleCosupportError(
        f"no rank-deficient cosupport of size ell={ell} found in {attempts} draws "
        f"(n={n}, d={frame.d}); ell is too large for this frame"
    )


def default_alpha(m: int, y) -> float:
    """``100 m / ||y||^2``, falling back to 100 when ``y == 0``."""
    yy = float(np.dot(y, y))
    return 100.0 * m / yy if yy > 0 else 100.0


def generate_instance(
    d: int,
    m: int,
    k: int,
    ell: int,
    alpha: float | None,
    noise_sigma: float,
    seed: int,
    basis: str = "orthogonal",
    measurement=None,
) -> ProblemInstance:
    """Seeded planted-cosparse instance with ``n = k d`` frame rows.

    Sub-seeds: the frame uses ``sub_seed(seed, FRAME)``, the signal
    ``sub_seed(seed, COSUPPORT)``, the measurement matrix stream
    ``(seed, MEASUREMENT)`` and the noise stream ``(seed, NOISE)``.
    ``measurement`` replaces the random ``M`` (test hook).
    """
    if m < 1:
        raise InvalidDimensionError(f"m must be >= 1, got {m}")
    if noise_sigma < 0:
        raise InvalidInputError(f"noise_sigma must be nonnegative, got {noise_sigma}")
    frame = build_concatenated_bases_frame(d, k, seeding.sub_seed(seed, seeding.FRAME), basis)
    x_true, lam = generate_cosparse_signal(frame, ell, seeding.sub_seed(seed, seeding.COSUPPORT))
    if measurement is None:
        M = seeding.rng(seed, seeding.MEASUREMENT).standard_normal((m, d)) / np.sqrt(m)
    else:
        M = np.asarray(measurement, dtype=float)
    y = M @ x_true
    if noise_sigma > 0:
        y = y + noise_sigma * seeding.rng(seed, seeding.NOISE).standard_normal(m)
    if alpha is None:
        alpha = default_alpha(m, y)
    return ProblemInstance(M=M, y=y, frame=frame, alpha=alpha, ground_truth=x_true, planted_cosupport=lam)
