"""Command-line front end: simulate | contract | checks | report.

Exit codes: 0 success, 1 solver abort, 2 configuration error, 3 enabled
verification failed.  All randomness is seeded from the configuration and
the thread flag only annotates outputs (reductions are fixed-order), so
rerunning a dumped effective configuration reproduces results bit-exactly.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import harness
from .grid import Density, make_grid, maxwellian_values
from .harness import ConfigError, ExperimentConfig, Report, emit_report, heat_sanity, run
from .hermite import HermiteCoefficients, poincare_check
from .landau3d import (Potential, bk_vectors, commutator_check,
                       divergence_free_residual, q_lift_consistency)

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_CONFIG = 2
EXIT_VERIFY = 3


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_toml(args.config)
    else:
        cfg = ExperimentConfig()
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, _, value = item.partition("=")
        cfg.apply_override(key.strip(), value.strip())
    if args.out:
        cfg.output_dir = args.out
    if args.threads:
        cfg.threads = args.threads
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config entry (repeatable, dotted paths)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=0,
                   help="worker threads (recorded; results are independent of it)")


def cmd_simulate(args) -> int:
    try:
        cfg = _load_config(args)
        cfg.initial_g = None
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = run(cfg, outdir=cfg.output_dir)
    if result.aborted:
        print(f"solver aborted: {result.abort_reason}", file=sys.stderr)
        return EXIT_SOLVER
    print(f"wrote traces to {cfg.output_dir}")
    return EXIT_OK


def _verify_all(cfg: ExperimentConfig, result) -> list[Report]:
    reports: list[Report] = []
    if cfg.verify_l2_decay:
        # initial eigenvalues straight from the trace's first row
        ftr = result.traces["f"]
        lam_in = [ftr.column(f"lambda_{ax}")[0] for ax in "xyz"[:cfg.dim]]
        reports.append(harness.verify_l2_decay(
            ftr, cfg.dim, lam_in,
            slack_value_factor=cfg.slack_value_factor,
            slack_resolution_factor=cfg.slack_resolution_factor))
    if cfg.verify_transport_monotone and "ot" in result.traces:
        reports.append(harness.verify_transport_monotone(
            result.traces["ot"], slack_value_factor=cfg.slack_value_factor,
            slack_resolution_factor=cfg.slack_resolution_factor))
    if cfg.verify_soft_bound and "ot" in result.traces:
        reports.append(harness.verify_soft_potential_bound(
            result, float(cfg.gamma), cfg.soft_p))
    if cfg.verify_coulomb and "ot" in result.traces:
        pref = cfg.coulomb_prefactor if cfg.coulomb_prefactor > 0 else None
        reports.append(harness.verify_coulomb_bound(
            result, tau0=cfg.coulomb_tau0, prefactor=pref))
    return reports


def cmd_contract(args) -> int:
    try:
        cfg = _load_config(args)
        if cfg.initial_g is None:
            raise ConfigError("contract needs [initial.g] (a pair of solutions)")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result = run(cfg, outdir=cfg.output_dir)
    if result.aborted:
        print(f"solver aborted: {result.abort_reason}", file=sys.stderr)
        return EXIT_SOLVER
    reports = _verify_all(cfg, result)
    emit_report(reports, cfg.output_dir, traces=result.traces)
    failed = [r for r in reports if not r.passed and not r.not_applicable]
    for r in reports:
        status = "n/a " if r.not_applicable else ("PASS" if r.passed else "FAIL")
        print(f"[{status}] {r.name}")
    return EXIT_VERIFY if failed else EXIT_OK


# ---------------------------------------------------------------------------
# identity checks
# ---------------------------------------------------------------------------

def _check_bk(seed: int = 0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(1000):
        fr = bk_vectors(rng.normal(scale=2.0, size=3))
        worst = max(worst, fr.decomposition_error(), fr.orthogonality_error())
    return worst < 1e-12, {"worst_residual": worst, "trials": 1000}


def _check_commutators(seed: int = 0):
    rep = commutator_check(n_points=200, seed=seed)
    return rep.passed, rep.to_dict()


def _check_divergence_free(seed: int = 0):
    worst = max(divergence_free_residual(Potential(gamma=g, r_floor=0.05),
                                         n_points=100, seed=seed)
                for g in (-1.0, -2.0, -3.0))
    return worst < 1e-6, {"worst_relative_residual": worst}


def _check_poincare(seed: int = 0):
    rng = np.random.default_rng(seed)
    min_poincare = np.inf
    min_42 = np.inf
    min_22 = np.inf
    trials = 400
    for _ in range(trials):
        dim = int(rng.integers(1, 4))
        deg = int(rng.integers(2, 9))
        coeffs = rng.normal(size=(deg + 1,) * dim)
        coeffs[(0,) * dim] = 0.0
        c = HermiteCoefficients(dim=dim, degree=deg, coeffs=coeffs)
        axis = int(rng.integers(0, dim))
        rep = poincare_check(c, axis)
        min_poincare = min(min_poincare, rep.poincare_slack)
        min_42 = min(min_42, rep.slack_42)
        min_22 = min(min_22, rep.slack_22)
    ok = min_poincare >= -1e-10 and min_42 >= -1e-10
    return ok, {"min_poincare_slack": min_poincare, "min_slack_42": min_42,
                "min_slack_22_informational": min_22, "trials": trials,
                "note": ("the (2,2)-constant variant of the moment bound is "
                         "violated by admissible functions; the valid (4,2) "
                         "variant and the zero-average inequality are enforced")}


def _check_q_lift(seed: int = 0):
    from .grid import GaussianSpec, discretize
    grid = make_grid(3, 4.5, 10)
    f = discretize(GaussianSpec(cov=(1.25, 1.0, 0.75)), grid, standardize=True)
    rep = q_lift_consistency(f, max_npts=12)
    return rep.passed, rep.to_dict()


def _check_heat(seed: int = 0):
    rep = heat_sanity()
    return rep.passed, rep.details


CHECKS = {
    "bk_decomposition": _check_bk,
    "commutators": _check_commutators,
    "divergence_free": _check_divergence_free,
    "poincare": _check_poincare,
    "q_lift": _check_q_lift,
    "heat_sanity": _check_heat,
}


def run_checks(filter_name: str | None = None, seed: int = 0,
               checks: dict | None = None) -> tuple[int, list[Report]]:
    checks = checks if checks is not None else CHECKS
    selected = {k: v for k, v in checks.items()
                if filter_name is None or filter_name in k}
    if not selected:
        print(f"no check matches filter {filter_name!r}", file=sys.stderr)
        return EXIT_CONFIG, []
    reports = []
    all_ok = True
    for name, fn in selected.items():
        ok, info = fn(seed)
        reports.append(Report(name=name, passed=bool(ok), details=info))
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        all_ok = all_ok and ok
    return (EXIT_OK if all_ok else EXIT_VERIFY), reports


def cmd_checks(args) -> int:
    code, reports = run_checks(args.filter, seed=args.seed)
    if args.out:
        emit_report(reports, args.out)
    return code


def cmd_report(args) -> int:
    try:
        cfg = ExperimentConfig.from_toml(os.path.join(args.dir, "config.effective.toml"))
    except (OSError, ConfigError) as exc:
        print(f"cannot load run directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    traces = {}
    for name in ("f", "g", "ot"):
        path = os.path.join(args.dir, f"trace_{name}.csv")
        if os.path.exists(path):
            traces[name] = harness.FunctionalTrace.from_csv(path)
    if not traces:
        print("no traces found", file=sys.stderr)
        return EXIT_CONFIG
    result = harness.RunResult(config=cfg, traces=traces)
    reports = _verify_all(cfg, result)
    emit_report(reports, args.out or args.dir, traces=traces)
    failed = [r for r in reports if not r.passed and not r.not_applicable]
    for r in reports:
        status = "n/a " if r.not_applicable else ("PASS" if r.passed else "FAIL")
        print(f"[{status}] {r.name}")
    return EXIT_VERIFY if failed else EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="landau-lab",
        description="Relaxation and transport-distance experiments for "
                    "grazing-collision dynamics at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a single-solution experiment")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("contract", help="run a pair experiment with verifications")
    _add_common(p)
    p.set_defaults(func=cmd_contract)

    p = sub.add_parser("checks", help="run the operator identity suites")
    p.add_argument("--filter", help="run only checks whose name contains this")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write a report to this directory")
    p.set_defaults(func=cmd_checks)

    p = sub.add_parser("report", help="re-render reports from stored traces")
    p.add_argument("--dir", required=True, help="run directory with traces")
    p.add_argument("--out", help="report output directory (default: --dir)")
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
