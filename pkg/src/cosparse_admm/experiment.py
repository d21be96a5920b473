"""Config-driven pipeline: generate, solve, certify, write artifacts.

A run directory holds

* ``config.json``  -- the experiment config as run;
* ``instance.json`` -- the generated instance (its SHA-256 is the fingerprint);
* ``trace.csv`` / ``trace.json`` -- per-sweep residuals and the solver sidecar;
* ``report.json`` / ``margins.csv`` -- the certification report;
* ``summary.json`` -- a ``RunSummary``.

Certification runs on a separate stride-1 replay of the same ADMM start
that is long enough for every requested ergodic horizon.  ADMM is
deterministic, so the replay agrees with the solve on their common prefix.
"""

from __future__ import annotations

import csv
import itertools
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .certify import CertificationReport, Tolerances, certified_reference, certify_all, h_distances, metric_for
from .errors import ConfigError, CosparseError, InfeasibleCosupportError, ReferenceUnavailableError
from .problem import ProblemInstance, generate_instance
from .solver import SolverConfig, SolverTrace, solve
from .vi import kkt_residuals

SUMMARY_SCHEMA = "cosparse-admm/summary/v1"
CONFIG_SCHEMA = "cosparse-admm/config/v1"

EXIT_OK = 0
EXIT_STRUCTURAL = 1
EXIT_CERT_FAILED = 2


@dataclass(frozen=True)
class InstanceSpec:
    d: int = 8
    m: int = 6
    k: int = 2
    ell: int = 12
    alpha: float | None = 100.0
    noise_sigma: float = 0.0
    basis: str = "signed_permutation"


@dataclass(frozen=True)
class CertifySpec:
    t_list: tuple = (10, 100, 1000)
    probe_count: int = 20
    iters: int = 200
    tolerances: Tolerances = field(default_factory=Tolerances)

    def replay_length(self) -> int:
        return max(self.iters, max(self.t_list, default=0) + 1)


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 3
    instance: InstanceSpec = field(default_factory=InstanceSpec)
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(primal_tol=1e-10, dual_tol=1e-10))
    certify: CertifySpec = field(default_factory=CertifySpec)
    output_dir: str = "runs/default"
    emit_full_iterates: bool = False

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if any(t < 1 for t in self.certify.t_list):
            raise ConfigError("certify.t_list entries must be positive integers")

    def to_dict(self) -> dict:
        return {
            "schema": CONFIG_SCHEMA,
            "master_seed": self.master_seed,
            "instance": asdict(self.instance),
            "solver": self.solver.to_dict(),
            "certify": {
                "t_list": list(self.certify.t_list),
                "probe_count": self.certify.probe_count,
                "iters": self.certify.iters,
                "tolerances": asdict(self.certify.tolerances),
            },
            "output_dir": self.output_dir,
            "emit_full_iterates": self.emit_full_iterates,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        data.pop("schema", None)
        unknown = set(data) - {"master_seed", "instance", "solver", "certify", "output_dir", "emit_full_iterates"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            inst = InstanceSpec(**data.get("instance", {}))
            solver = SolverConfig.from_dict(data["solver"]) if "solver" in data else cls().solver
            cert = dict(data.get("certify", {}))
            if "t_list" in cert:
                cert["t_list"] = tuple(int(t) for t in cert["t_list"])
            cert["tolerances"] = Tolerances.from_dict(cert.get("tolerances"))
            return cls(
                master_seed=int(data.get("master_seed", 3)),
                instance=inst,
                solver=solver,
                certify=CertifySpec(**cert),
                output_dir=str(data.get("output_dir", "runs/default")),
                emit_full_iterates=bool(data.get("emit_full_iterates", False)),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class RunSummary:
    fingerprint: str
    converged: bool
    iters_run: int
    final_primal_residual: float
    final_dual_residual: float
    final_kkt: dict
    overall_pass: bool
    worst_margin: float
    failed_checks: list
    skipped_checks: list
    duration_s: float

    def to_dict(self) -> dict:
        return {"schema": SUMMARY_SCHEMA, **asdict(self)}

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.overall_pass else EXIT_CERT_FAILED


def build_instance(config: ExperimentConfig) -> ProblemInstance:
    spec = config.instance
    try:
        return generate_instance(spec.d, spec.m, spec.k, spec.ell, spec.alpha, spec.noise_sigma,
                                 config.master_seed, basis=spec.basis)
    except InfeasibleCosupportError as exc:
        raise InfeasibleCosupportError(f"{exc} [instance spec: {asdict(spec)}, seed={config.master_seed}]") from exc


def certification_trace(instance: ProblemInstance, config: ExperimentConfig) -> SolverTrace:
    n = config.certify.replay_length()
    replay = replace(config.solver, max_iters=n, min_iters=n, record_every=1)
    return solve(instance, replay)


def certify_instance(instance: ProblemInstance, config: ExperimentConfig) -> CertificationReport:
    trace = certification_trace(instance, config)
    tol = config.certify.tolerances
    try:
        reference, _ = certified_reference(instance, tol.kkt)
    except ReferenceUnavailableError:
        reference = None
    return certify_all(trace, instance, reference, tol, config.certify.probe_count,
                       config.certify.t_list, seed=config.master_seed)


def run(config: ExperimentConfig, output_dir=None) -> RunSummary:
    start = time.perf_counter()
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.to_dict(), indent=1))

    instance = build_instance(config)
    instance.save(out / "instance.json")
    trace = solve(instance, config.solver)
    report = certify_instance(instance, config)

    h_dist = None
    if report.reference and report.reference.get("certified"):
        v_star = (np.array(report.reference["lambda"]), np.array(report.reference["x"]))
        h_dist = h_distances(trace, v_star, metric_for(instance, config.solver.beta)[0]) if trace.stride_one else None
    trace.write_csv(out / "trace.csv", h_dist)
    trace.write_json(out / "trace.json", config.emit_full_iterates)
    report.write_json(out / "report.json")
    report.write_margins_csv(out / "margins.csv")

    kkt = kkt_residuals(trace.final.point, instance)
    summary = RunSummary(
        fingerprint=instance.fingerprint(),
        converged=trace.converged,
        iters_run=trace.iters_run,
        final_primal_residual=float(trace.primal_residuals[-1]),
        final_dual_residual=float(trace.dual_residuals[-1]),
        final_kkt=kkt.to_dict(),
        overall_pass=report.overall_pass,
        worst_margin=report.worst_margin,
        failed_checks=report.failed_checks,
        skipped_checks=[c.name for c in report.checks.values() if c.skipped],
        duration_s=time.perf_counter() - start,
    )
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=1))
    return summary


def load_run_trace(run_dir) -> tuple[ProblemInstance, ExperimentConfig, SolverTrace]:
    """Rebuild the certification trace of a finished run.

    Uses the stored full iterates when they cover the replay horizon, and
    otherwise replays the deterministic solver from the stored config.
    """
    run_dir = Path(run_dir)
    instance = ProblemInstance.load(run_dir / "instance.json")
    config = ExperimentConfig.load(run_dir / "config.json")
    sidecar = json.loads((run_dir / "trace.json").read_text())
    if sidecar.get("instance_ref") != instance.fingerprint()[:16]:
        raise ConfigError("trace.json does not belong to instance.json (fingerprint mismatch)")
    its = sidecar.get("iterates")
    n = config.certify.replay_length()
    if its and len(its["k"]) == sidecar["iters_run"] + 1 and sidecar["iters_run"] >= n:
        trace = _trace_from_iterates(instance, config, its, sidecar)
    else:
        trace = certification_trace(instance, config)
    return instance, config, trace


def _trace_from_iterates(instance, config, its, sidecar) -> SolverTrace:
    z, x, lam = (np.array(its[key]) for key in ("z", "x", "lambda"))
    nan = np.full(len(its["k"]), np.nan)
    return SolverTrace(
        instance_ref=sidecar["instance_ref"], config=config.solver, ks=np.array(its["k"]), z=z, x=x, lam=lam,
        primal_residuals=nan, dual_residuals=nan, objective_values=nan, linsys_residuals=nan,
        converged=sidecar["converged"], iters_run=sidecar["iters_run"],
    )


def recertify(run_dir) -> CertificationReport:
    instance, config, trace = load_run_trace(run_dir)
    tol = config.certify.tolerances
    try:
        reference, _ = certified_reference(instance, tol.kkt)
    except ReferenceUnavailableError:
        reference = None
    report = certify_all(trace, instance, reference, tol, config.certify.probe_count,
                         config.certify.t_list, seed=config.master_seed)
    report.write_json(Path(run_dir) / "report.json")
    report.write_margins_csv(Path(run_dir) / "margins.csv")
    return report


# ---------------------------------------------------------------- sweeps

def _set_path(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def expand_grid(grid: dict) -> list[dict]:
    """Config dicts from ``{"configs": [...]}`` or ``{"base": {...}, "grid": {"a.b": [...]}}``."""
    if "configs" in grid:
        configs = list(grid["configs"])
    else:
        base = grid.get("base", {})
        axes = grid.get("grid", {})
        if not axes or any(len(v) == 0 for v in axes.values()):
            configs = []
        else:
            configs = []
            names = list(axes)
            for combo in itertools.product(*(axes[k] for k in names)):
                cfg = json.loads(json.dumps(base))
                for name, value in zip(names, combo):
                    _set_path(cfg, name, value)
                configs.append(cfg)
    if not configs:
        raise ConfigError("sweep needs at least one config")
    return configs


def _flatten(prefix: str, obj, out: dict) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else k, v, out)
    elif isinstance(obj, (list, tuple)):
        out[prefix] = json.dumps(obj)
    else:
        out[prefix] = obj


def _sweep_one(args) -> dict:
    index, cfg_dict, out_dir = args
    row = {"run": index, "status": "ok", "error": ""}
    try:
        config = ExperimentConfig.from_dict(cfg_dict)
        _flatten("", {k: v for k, v in config.to_dict().items() if k not in ("schema", "output_dir")}, row)
        summary = run(config, out_dir)
        flat = {}
        _flatten("", summary.to_dict(), flat)
        flat.pop("schema", None)
        row.update(flat)
        if not summary.overall_pass:
            row["status"] = "certificates_failed"
    except (CosparseError, OSError, ValueError) as exc:
        row["status"] = "error"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def sweep(grid: dict, output_dir, jobs: int = 1) -> list[dict]:
    """Run every config of ``grid`` into ``output_dir/run_NNNN`` and write ``sweep.csv``."""
    configs = expand_grid(grid)
    root = Path(output_dir)
    root.mkdir(parents=True, exist_ok=True)
    tasks = [(i, cfg, str(root / f"run_{i:04d}")) for i, cfg in enumerate(configs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, tasks))
    else:
        rows = [_sweep_one(t) for t in tasks]
    columns = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(root / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    return rows
