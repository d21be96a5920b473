"""Analysis operators that are Parseval (tight, A = B = 1) frames.

A frame here is an ``n x d`` matrix ``D`` with ``n >= d`` whose rows are the
frame vectors.  Its optimal frame bounds are the extreme eigenvalues of
``D.T @ D``.  The solver's contraction metric collapses to a diagonal form
only when ``D.T @ D == I``, so tightness and uniform row norm are checked and
reported separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import seeding
from .errors import InvalidDimensionError, InvalidInputError

DEFAULT_TOL = 1e-9
SCHEMA = "cosparse-admm/frame/v1"

BASES = ("orthogonal", "signed_permutation")


@dataclass(frozen=True)
class FrameConstruction:
    """How a frame was built: ``Identity``, ``ConcatenatedBases`` or ``External``."""

    tag: str
    k: int | None = None
    seed: int | None = None
    basis: str | None = None

    def to_dict(self) -> dict:
        out = {"tag": self.tag}
        if self.tag == "ConcatenatedBases":
            out.update(k=self.k, seed=self.seed, basis=self.basis)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FrameConstruction":
        return cls(tag=data["tag"], k=data.get("k"), seed=data.get("seed"), basis=data.get("basis"))


@dataclass(frozen=True)
class FrameReport:
    lower_bound: float
    upper_bound: float
    is_tight: bool
    is_uniform_row_norm: bool
    max_gram_deviation: float
    row_norm_spread: float

    def to_dict(self) -> dict:
        return {
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "is_tight": self.is_tight,
            "is_uniform_row_norm": self.is_uniform_row_norm,
            "max_gram_deviation": self.max_gram_deviation,
            "row_norm_spread": self.row_norm_spread,
        }


@dataclass(frozen=True, eq=False)
class TightFrame:
    """An immutable analysis operator with its frame bounds.

    ``row_norm`` is the common row norm when the rows are uniform (within the
    validator tolerance) and ``None`` otherwise.
    """

    entries: np.ndarray
    frame_lower: float
    frame_upper: float
    row_norm: float | None
    construction: FrameConstruction = field(default_factory=lambda: FrameConstruction("External"))

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float, copy=True)
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def d(self) -> int:
        return self.entries.shape[1]

    @property
    def D(self) -> np.ndarray:
        return self.entries

    @classmethod
    def from_matrix(cls, D, construction: FrameConstruction | None = None, tol: float = DEFAULT_TOL) -> "TightFrame":
        report = validate_frame(D, tol)
        norms = np.linalg.norm(np.asarray(D, dtype=float), axis=1)
        row_norm = float(norms.mean()) if report.is_uniform_row_norm else None
        return cls(
            entries=D,
            frame_lower=report.lower_bound,
            frame_upper=report.upper_bound,
            row_norm=row_norm,
            construction=construction or FrameConstruction("External"),
        )

    def report(self, tol: float = DEFAULT_TOL) -> FrameReport:
        return validate_frame(self.entries, tol)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "n": self.n,
            "d": self.d,
            "entries": self.entries.tolist(),
            "construction": self.construction.to_dict(),
            "seed": self.construction.seed,
        }

    @classmethod
    def from_dict(cls, data: dict, tol: float = DEFAULT_TOL) -> "TightFrame":
        entries = np.asarray(data["entries"], dtype=float)
        if entries.ndim != 2:
            raise InvalidInputError("frame entries must be a 2-D row-major array")
        if "n" in data and "d" in data and entries.shape != (data["n"], data["d"]):
            raise InvalidInputError(f"entries have shape {entries.shape}, header says ({data['n']}, {data['d']})")
        construction = FrameConstruction.from_dict(data.get("construction", {"tag": "External"}))
        return cls.from_matrix(entries, construction, tol)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path, tol: float = DEFAULT_TOL) -> "TightFrame":
        return cls.from_dict(json.loads(Path(path).read_text()), tol)


def validate_frame(D, tol: float = DEFAULT_TOL) -> FrameReport:
    """Frame bounds of the rows of ``D`` via a symmetric eigensolve of ``D.T @ D``."""
    D = np.asarray(D, dtype=float)
    if D.ndim != 2:
        raise InvalidInputError(f"D must be a matrix, got ndim={D.ndim}")
    if not np.all(np.isfinite(D)):
        raise InvalidInputError("D has non-finite entries")
    n, d = D.shape
    if d < 1 or n < d:
        raise InvalidDimensionError(f"need n >= d >= 1, got n={n}, d={d}")
    if not tol > 0:
        raise InvalidInputError(f"tol must be positive, got {tol}")
    gram = D.T @ D
    eig = np.linalg.eigvalsh(gram)
    lower, upper = float(eig[0]), float(eig[-1])
    norms = np.linalg.norm(D, axis=1)
    spread = float(norms.max() - norms.min())
    return FrameReport(
        lower_bound=lower,
        upper_bound=upper,
        is_tight=(upper - lower) <= tol,
        is_uniform_row_norm=spread <= tol,
        max_gram_deviation=float(np.max(np.abs(gram - np.eye(d)))),
        row_norm_spread=spread,
    )


def build_identity_frame(d: int) -> TightFrame:
    if d < 1:
        raise InvalidDimensionError(f"d must be >= 1, got {d}")
    return TightFrame(np.eye(d), 1.0, 1.0, 1.0, FrameConstruction("Identity"))


def random_orthogonal(d: int, gen: np.random.Generator) -> np.ndarray:
    """Haar-type orthogonal matrix: QR of a Gaussian matrix with ``diag(R) > 0``."""
    Q, R = np.linalg.qr(gen.standard_normal((d, d)))
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def random_signed_permutation(d: int, gen: np.random.Generator) -> np.ndarray:
    perm = gen.permutation(d)
    signs = gen.choice(np.array([-1.0, 1.0]), size=d)
    Q = np.zeros((d, d))
    Q[np.arange(d), perm] = signs
    return Q


def build_concatenated_bases_frame(d: int, k: int, seed: int = 0, basis: str = "orthogonal", bases=None) -> TightFrame:
    """Stack ``k`` orthogonal ``d x d`` bases and scale by ``1/sqrt(k)``.

    The first basis is always the identity.  Bases ``2..k`` are drawn from the
    PCG64 stream ``(seed, i)``: Haar-type orthogonal matrices for
    ``basis="orthogonal"``, or random signed permutation matrices for
    ``basis="signed_permutation"``.  The latter produce row systems with many
    rank-deficient row subsets, which is what makes cosparsity ``>= d``
    reachable.

    ``bases`` overrides the random draw with explicit matrices (test hook).
    """
    if d < 1:
        raise InvalidDimensionError(f"d must be >= 1, got {d}")
    if k < 1:
        raise InvalidDimensionError(f"k must be >= 1, got {k}")
    if basis not in BASES:
        raise InvalidInputError(f"unknown basis family {basis!r}; expected one of {BASES}")
    if bases is None:
        draw = random_orthogonal if basis == "orthogonal" else random_signed_permutation
        bases = [np.eye(d)] + [draw(d, seeding.rng(seed, i)) for i in range(1, k)]
    else:
        bases = [np.asarray(Q, dtype=float) for Q in bases]
        if len(bases) != k or any(Q.shape != (d, d) for Q in bases):
            raise InvalidDimensionError(f"expected {k} bases of shape ({d}, {d})")
    D = np.vstack(bases) / np.sqrt(k)
    return TightFrame(D, 1.0, 1.0, 1.0 / np.sqrt(k), FrameConstruction("ConcatenatedBases", k, seed, basis))
