"""ADMM for the split analysis-LASSO problem.

Each sweep updates ``z``, then ``x``, then the multiplier:

    z+   = argmin_z ||z||_1 + lam^T z + (beta/2)||Dx - z||^2
    x+   = argmin_x (alpha/2)||y - Mx||^2 - lam^T D x + (beta/2)||Dx - z+||^2
    lam+ = lam - beta (D x+ - z+)

The ``z`` step is a soft threshold; the ``x`` step solves the SPD system
``(alpha M^T M + beta D^T D) x = alpha M^T y + D^T (lam + beta z+)`` with a
Cholesky factor computed once per solve.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ConfigError, DivergenceError, NumericError, ReferenceUnavailableError
from .problem import ProblemInstance
from .vi import ViPoint, theta

MUTATIONS = ("threshold", "rhs_sign", "multiplier_sign")


@dataclass(frozen=True)
class SolverConfig:
    """ADMM settings.

    ``lambda0`` may be an array, ``None`` (zeros) or the string
    ``"consistent"``, which picks the minimum-norm multiplier making ``x0``
    stationary for the ``x`` subproblem.  Stopping is only tested once
    ``min_iters`` sweeps have run.
    """

    beta: float = 1.0
    max_iters: int = 100_000
    primal_tol: float = 1e-8
    dual_tol: float = 1e-8
    record_every: int = 1
    x0: tuple | None = None
    lambda0: tuple | str | None = None
    min_iters: int = 0

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if not (self.primal_tol > 0 and self.dual_tol > 0):
            raise ConfigError("stopping tolerances must be positive")
        if self.max_iters < 1 or self.record_every < 1 or self.min_iters < 0:
            raise ConfigError("need max_iters >= 1, record_every >= 1, min_iters >= 0")
        if self.x0 is not None:
            object.__setattr__(self, "x0", tuple(float(v) for v in np.ravel(self.x0)))
        if isinstance(self.lambda0, str):
            if self.lambda0 != "consistent":
                raise ConfigError(f"lambda0 must be an array, None or 'consistent', got {self.lambda0!r}")
        elif self.lambda0 is not None:
            object.__setattr__(self, "lambda0", tuple(float(v) for v in np.ravel(self.lambda0)))

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("x0", "lambda0"):
            if isinstance(out[key], tuple):
                out[key] = list(out[key])
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown solver fields: {sorted(extra)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class AdmmIterate:
    k: int
    z: np.ndarray
    x: np.ndarray
    lam: np.ndarray

    @property
    def point(self) -> ViPoint:
        return ViPoint(self.z, self.x, self.lam)


@dataclass
class XUpdateCache:
    """Cholesky factor of ``alpha M^T M + beta D^T D`` plus loop constants."""

    factor: tuple
    matrix: np.ndarray
    alpha_Mty: np.ndarray
    beta: float

    @classmethod
    def build(cls, instance: ProblemInstance, beta: float) -> "XUpdateCache":
        M, D = instance.M, instance.D
        A = instance.alpha * (M.T @ M) + beta * (D.T @ D)
        try:
            factor = scipy.linalg.cho_factor(A)
        except np.linalg.LinAlgError as exc:
            eig = np.linalg.eigvalsh(A)
            raise NumericError(
                f"alpha M^T M + beta D^T D is not positive definite (smallest eigenvalue {eig[0]:.3e}); "
                "D is probably not a frame"
            ) from exc
        return cls(factor, A, instance.alpha * (M.T @ instance.y), beta)


@dataclass(eq=False)
class SolverTrace:
    """Everything a solve produced.

    ``z``, ``x`` and ``lam`` hold the recorded iterates row by row at the
    indices ``ks`` (always including 0 and the last sweep).  The residual,
    objective and linear-system series cover every sweep ``k = 0..iters_run``;
    entries that are undefined at ``k = 0`` are NaN.  ``z^0`` is taken as
    ``D x^0``.
    """

    instance_ref: str
    config: SolverConfig
    ks: np.ndarray
    z: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    primal_residuals: np.ndarray
    dual_residuals: np.ndarray
    objective_values: np.ndarray
    linsys_residuals: np.ndarray
    converged: bool
    iters_run: int
    mutation: str | None = None

    @property
    def stride_one(self) -> bool:
        return len(self.ks) == self.iters_run + 1

    @property
    def iterates(self) -> list[AdmmIterate]:
        return [AdmmIterate(int(k), self.z[i], self.x[i], self.lam[i]) for i, k in enumerate(self.ks)]

    @property
    def final(self) -> AdmmIterate:
        return AdmmIterate(int(self.ks[-1]), self.z[-1], self.x[-1], self.lam[-1])

    def point(self, i: int) -> ViPoint:
        return ViPoint(self.z[i], self.x[i], self.lam[i])

    def write_csv(self, path, h_dist=None) -> None:
        """One row per sweep; ``h_dist`` (if given) is indexed like the residuals."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "primal_residual", "dual_residual", "objective", "h_dist_to_ref"])
            for k in range(self.iters_run + 1):
                h = "" if h_dist is None else repr(float(h_dist[k]))
                w.writerow([k, repr(float(self.primal_residuals[k])), repr(float(self.dual_residuals[k])),
                            repr(float(self.objective_values[k])), h])

    def sidecar(self, full_iterates: bool = False) -> dict:
        out = {
            "schema": "cosparse-admm/trace/v1",
            "instance_ref": self.instance_ref,
            "config": self.config.to_dict(),
            "converged": self.converged,
            "iters_run": self.iters_run,
            "mutation": self.mutation,
            "final": {"k": int(self.ks[-1]), "z": self.z[-1].tolist(), "x": self.x[-1].tolist(),
                      "lambda": self.lam[-1].tolist()},
        }
        if full_iterates:
            out["iterates"] = {"k": self.ks.tolist(), "z": self.z.tolist(), "x": self.x.tolist(),
                               "lambda": self.lam.tolist()}
        return out

    def write_json(self, path, full_iterates: bool = False) -> None:
        Path(path).write_text(json.dumps(self.sidecar(full_iterates)))


def soft_threshold(v, tau: float) -> np.ndarray:
    """``sign(v) * max(|v| - tau, 0)``; ties ``|v| == tau`` map to 0."""
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def z_update(x, lam, instance: ProblemInstance, config: SolverConfig, threshold_scale: float = 1.0) -> np.ndarray:
    beta = config.beta
    return soft_threshold(instance.D @ x - lam / beta, threshold_scale / beta)


def x_update(z, lam, instance: ProblemInstance, config: SolverConfig, cache: XUpdateCache,
             rhs_sign: float = 1.0) -> tuple[np.ndarray, float]:
    """Minimizer of the ``x`` subproblem and its relative linear-system residual."""
    rhs = cache.alpha_Mty + instance.D.T @ (rhs_sign * lam + config.beta * z)
    x = scipy.linalg.cho_solve(cache.factor, rhs, check_finite=False)
    resid = np.linalg.norm(cache.matrix @ x - rhs) / (1.0 + np.linalg.norm(rhs))
    return x, float(resid)


def multiplier_update(lam, x_new, z_new, beta: float, D, sign: float = 1.0) -> np.ndarray:
    return lam - sign * beta * (D @ x_new - z_new)


def consistent_multiplier(instance: ProblemInstance, x0) -> np.ndarray:
    """Minimum-norm ``lam`` with ``D^T lam = alpha M^T (M x0 - y)``."""
    g = instance.alpha * (instance.M.T @ (instance.M @ x0 - instance.y))
    lam, *_ = np.linalg.lstsq(instance.D.T, g, rcond=None)
    return lam


def initial_point(instance: ProblemInstance, config: SolverConfig) -> tuple[np.ndarray, np.ndarray]:
    x0 = np.zeros(instance.d) if config.x0 is None else np.array(config.x0, dtype=float)
    if x0.size != instance.d:
        raise ConfigError(f"x0 has length {x0.size}, instance has d={instance.d}")
    if config.lambda0 is None:
        lam0 = np.zeros(instance.n)
    elif isinstance(config.lambda0, str):
        lam0 = consistent_multiplier(instance, x0)
    else:
        lam0 = np.array(config.lambda0, dtype=float)
    if lam0.size != instance.n:
        raise ConfigError(f"lambda0 has length {lam0.size}, instance has n={instance.n}")
    return x0, lam0


def solve(instance: ProblemInstance, config: SolverConfig | None = None, mutation: str | None = None) -> SolverTrace:
    """Run ADMM until both residuals meet their tolerances or ``max_iters``.

    ``mutation`` deliberately corrupts one update and exists only to test
    that the certificates notice: ``"threshold"`` doubles the shrinkage,
    ``"rhs_sign"`` flips the multiplier in the ``x`` right-hand side and
    ``"multiplier_sign"`` flips the sign of the multiplier step.
    """
    config = config or SolverConfig()
    if mutation is not None and mutation not in MUTATIONS:
        raise ConfigError(f"unknown mutation {mutation!r}")
    D, beta = instance.D, config.beta
    cache = XUpdateCache.build(instance, beta)
    x, lam = initial_point(instance, config)
    z = D @ x
    thr = 2.0 if mutation == "threshold" else 1.0
    rhs_sign = -1.0 if mutation == "rhs_sign" else 1.0
    mult_sign = -1.0 if mutation == "multiplier_sign" else 1.0

    ks, zs, xs, lams = [0], [z], [x], [lam]
    primal, dual = [float(np.linalg.norm(D @ x - z))], [np.nan]
    objective, linsys = [theta(z, x, instance)], [np.nan]
    converged = False
    k = 0
    while k < config.max_iters:
        z_new = z_update(x, lam, instance, config, thr)
        x_new, res = x_update(z_new, lam, instance, config, cache, rhs_sign)
        lam_new = multiplier_update(lam, x_new, z_new, beta, D, mult_sign)
        k += 1
        if not (np.all(np.isfinite(z_new)) and np.all(np.isfinite(x_new)) and np.all(np.isfinite(lam_new))):
            raise DivergenceError(
                f"non-finite iterate at k={k} (beta={beta}, |x|={np.linalg.norm(x):.3e}, "
                f"|lam|={np.linalg.norm(lam):.3e})"
            )
        primal.append(float(np.linalg.norm(D @ x_new - z_new)))
        dual.append(float(beta * np.linalg.norm(D.T @ (z_new - z))))
        objective.append(theta(z_new, x_new, instance))
        linsys.append(res)
        z, x, lam = z_new, x_new, lam_new
        done = k >= config.min_iters and primal[-1] <= config.primal_tol and dual[-1] <= config.dual_tol
        if done:
            converged = True
        if k % config.record_every == 0 or done or k == config.max_iters:
            ks.append(k)
            zs.append(z)
            xs.append(x)
            lams.append(lam)
        if done:
            break

    return SolverTrace(
        instance_ref=instance.fingerprint()[:16],
        config=config,
        ks=np.array(ks),
        z=np.array(zs),
        x=np.array(xs),
        lam=np.array(lams),
        primal_residuals=np.array(primal),
        dual_residuals=np.array(dual),
        objective_values=np.array(objective),
        linsys_residuals=np.array(linsys),
        converged=converged,
        iters_run=k,
        mutation=mutation,
    )


def reference_config(beta: float = 1.0, tol: float = 1e-12, max_iters: int = 200_000) -> SolverConfig:
    return SolverConfig(beta=beta, max_iters=max_iters, primal_tol=tol, dual_tol=tol, record_every=max_iters)


def reference_solution(instance: ProblemInstance, config_hi: SolverConfig | None = None) -> AdmmIterate:
    """Final iterate of a high-accuracy run.

    The caller is expected to verify it with ``vi.kkt_residuals`` before
    using it as a saddle point.
    """
    config_hi = config_hi or reference_config()
    trace = solve(instance, config_hi)
    if not trace.converged:
        raise ReferenceUnavailableError(
            f"reference run did not reach tolerance {config_hi.primal_tol:g} in {config_hi.max_iters} sweeps "
            f"(beta={config_hi.beta})"
        )
    return trace.final


def load_trace_sidecar(path) -> dict:
    return json.loads(Path(path).read_text())


__all__ = [
    "AdmmIterate",
    "SolverConfig",
    "SolverTrace",
    "XUpdateCache",
    "consistent_multiplier",
    "multiplier_update",
    "reference_solution",
    "soft_threshold",
    "solve",
    "x_update",
    "z_update",
]
