"""Command line driver: run / check / hessian / init.

Exit codes: 0 success (and all checks passed), 1 configuration error,
2 degeneracy or step failure (with a diagnostic JSON) or failed checks.

Thread count must be pinned before numpy loads its BLAS, so this module
imports the numerics lazily inside main().
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _parser():
    p = argparse.ArgumentParser(
        prog="donflow",
        description="Donaldson geometric flow simulator on the flat four-torus")
    p.add_argument("--threads", type=int, default=None,
                   help="pin BLAS/OpenMP thread count")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="JSON configuration file")
    common.add_argument("--out", type=Path, default=None,
                        help="override the output directory")
    common.add_argument("--seed", type=int, default=None,
                        help="override the configured seed")

    sub.add_parser("run", parents=[common],
                   help="integrate the flow, write CSV monitors and snapshots")
    sub.add_parser("check", parents=[common],
                   help="run randomized identity suites, write a JSON report")
    ph = sub.add_parser("hessian", parents=[common],
                        help="probe the Hessian quadratic form at a snapshot")
    ph.add_argument("--snapshot", type=Path, required=True,
                    help="snapshot header (.json) to probe")
    ph.add_argument("--directions", type=int, default=50,
                    help="number of random exact probe directions")
    pi = sub.add_parser("init", help="emit a template configuration file")
    pi.add_argument("--config", type=Path,
                    default=Path("donflow_config.json"))
    return p


def _load_config(args):
    from donflow.config import RunConfig, load_config

    cfg = load_config(args.config) if args.config else RunConfig().validate()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out_dir = str(args.out)
    return cfg.validate()


def _cmd_run(args):
    from donflow import flow
    from donflow.exterior import DegenerateForm

    cfg = _load_config(args)
    try:
        result = flow.run(cfg)
    except (flow.StepFailure, DegenerateForm) as err:
        print(f"donflow run: aborted: {err}", file=sys.stderr)
        return 2
    print(f"donflow run: {result.reason} after {result.steps} steps, "
          f"energy {result.state.monitors['energy']:.12f}, "
          f"residual {result.state.monitors['residual_l2']:.3e}")
    print(f"monitors: {result.csv_path}")
    return 0


def _cmd_check(args):
    from donflow import checks

    cfg = _load_config(args)
    try:
        records, ok = checks.run_suites(cfg.check_suite, cfg.seed, cfg.samples)
    except KeyError as err:
        print(f"donflow check: {err.args[0]}", file=sys.stderr)
        return 1
    report = {
        "seed": cfg.seed,
        "samples": cfg.samples,
        "suites": cfg.check_suite,
        "checks": records,
        "passed": ok,
    }
    path = Path(cfg.report_path) if cfg.report_path else (
        Path(cfg.out_dir) / "checks_report.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    for rec in records:
        status = "PASS" if rec["passed"] else "FAIL"
        print(f"[{status}] {rec['name']}: rel_err {rec['rel_err']:.3e} "
              f"(tol {rec['tol']:.1e})")
    print(f"report: {path}")
    return 0 if ok else 2


def _cmd_hessian(args):
    import numpy as np

    from donflow import flow
    from donflow import lattice as lat
    from donflow.exterior import DegenerateForm, U_FLOOR, norm2_sq, u_of
    from donflow.snapshots import load_snapshot

    cfg = _load_config(args)
    grid, rho, time, _ = load_snapshot(args.snapshot)
    u_min = float(u_of(rho).min())
    path = Path(cfg.report_path) if cfg.report_path else (
        Path(cfg.out_dir) / "hessian_report.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    if u_min <= U_FLOOR:
        path.write_text(json.dumps(
            {"snapshot": str(args.snapshot), "u_min": u_min,
             "error": "degenerate snapshot"}, indent=2, sort_keys=True) + "\n")
        print(f"donflow hessian: degenerate snapshot (u_min = {u_min:.3e})",
              file=sys.stderr)
        return 2
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    values, quotients = [], []
    try:
        for _ in range(args.directions):
            mu = lat.random_trig_field(rng, cfg.kmax, ncomp=4)(grid)
            rh = lat.d1(grid, mu)
            rh *= 1.0 / np.abs(rh).max()
            h = flow.hessian_form(grid, rho, rh)
            flat = lat.integrate(grid, norm2_sq(rh))
            values.append(h)
            quotients.append(h / flat)
    except DegenerateForm as err:
        print(f"donflow hessian: {err}", file=sys.stderr)
        return 2
    report = {
        "snapshot": str(args.snapshot),
        "time": time,
        "n": grid.n,
        "scheme": grid.scheme,
        "u_min": u_min,
        "directions": args.directions,
        "hessian_values": values,
        "quotients": quotients,
        "min_quotient": min(quotients),
        "max_quotient": max(quotients),
    }
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"donflow hessian: {args.directions} directions, quotients in "
          f"[{min(quotients):.12f}, {max(quotients):.12f}]")
    print(f"report: {path}")
    return 0


def _cmd_init(args):
    from donflow.config import save_template

    save_template(args.config)
    print(f"wrote template configuration to {args.config}")
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "hessian":
            return _cmd_hessian(args)
        if args.command == "init":
            return _cmd_init(args)
    except Exception as err:  # config errors exit 1 with the offending key
        from donflow.config import ConfigError

        if isinstance(err, ConfigError):
            print(f"donflow: configuration error: {err}", file=sys.stderr)
            return 1
        raise
    return 1


if __name__ == "__main__":
    sys.exit(main())
