"""Command-line entry point.

Exit codes: 0 success, 1 structural error (bad config, dimensions, I/O,
numerics), 2 the run completed but a certificate failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import CosparseError
from .experiment import EXIT_CERT_FAILED, EXIT_OK, EXIT_STRUCTURAL, ExperimentConfig, recertify, run, sweep
from .frame import DEFAULT_TOL, validate_frame


def _cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config)
    summary = run(config, args.out)
    print(json.dumps(summary.to_dict(), indent=1))
    return summary.exit_code


def _cmd_sweep(args) -> int:
    grid = json.loads(Path(args.grid).read_text())
    out = args.out or grid.get("output_dir", "runs/sweep")
    rows = sweep(grid, out, jobs=args.jobs)
    statuses = [r["status"] for r in rows]
    for r in rows:
        print(f"run {r['run']:4d}  {r['status']}  {r['error']}".rstrip())
    if "error" in statuses:
        return EXIT_STRUCTURAL
    if "certificates_failed" in statuses:
        return EXIT_CERT_FAILED
    return EXIT_OK


def _cmd_validate_frame(args) -> int:
    data = json.loads(Path(args.input).read_text())
    entries = data["entries"] if isinstance(data, dict) else data
    report = validate_frame(entries, args.tol)
    print(json.dumps(report.to_dict(), indent=1))
    return EXIT_OK if report.is_tight else EXIT_CERT_FAILED


def _cmd_certify(args) -> int:
    report = recertify(args.trace)
    print(json.dumps({"overall_pass": report.overall_pass, "worst_margin": report.worst_margin,
                      "failed_checks": report.failed_checks, "k0": report.k0}, indent=1))
    return EXIT_OK if report.overall_pass else EXIT_CERT_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cosparse-admm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="generate, solve and certify one instance")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="override output_dir")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run a grid of configs")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("validate-frame", help="check a frame for tightness")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.set_defaults(func=_cmd_validate_frame)

    p = sub.add_parser("certify", help="re-certify a finished run directory")
    p.add_argument("--trace", required=True, help="run directory")
    p.set_defaults(func=_cmd_certify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CosparseError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_STRUCTURAL


if __name__ == "__main__":
    sys.exit(main())
