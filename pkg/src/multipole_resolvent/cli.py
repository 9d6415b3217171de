"""Command line entry point.

Subcommands: validate, run, report (experiments) and sweep, norm, modes, fit
(direct probes).  Exit codes: 0 success, 2 config or hypothesis failure,
3 solver or stage failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import (build_geometry, build_potential, eps_policy, lambda_grid, load_config, parse_eps_policy)
from .errors import ConfigError, HypothesisError, ResolventError
from .experiment import SWEEP_COLUMNS, csv_text, emit_report, load_record, run_experiment
from .operators import SemiclassicalParams
from .potential import validate_hypotheses
from .resolvent import default_window, epsilon_for, fit_power_law, frequency_sweep
from .sphere import analytic_basis, angular_eigenproblem

log = logging.getLogger("multipole_resolvent")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


def _spec_checked(cfg, allow):
    spec = build_potential(cfg)
    rep = validate_hypotheses(spec)
    if not rep.passed and not allow:
        raise HypothesisError("hypotheses violated:\n" + rep.summary(), rep.failures()[0].name)
    return spec


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    spec = build_potential(cfg)
    rep = validate_hypotheses(spec)
    print(rep.summary())
    if rep.passed:
        return EXIT_OK
    return EXIT_OK if args.allow_violations else EXIT_INVALID


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    rec = run_experiment(cfg, args.out_dir, threads=args.threads, allow_violations=args.allow_violations or None,
                         seed=args.seed, use_cache=not args.no_cache)
    print(json.dumps({"name": rec.name, "status": rec.status, "config_digest": rec.config_digest,
                      "summary": rec.summary, "error": rec.error}, indent=2, default=float))
    return rec.exit_code


def cmd_report(args) -> int:
    records = [load_record(p) for p in args.runs]
    for p in emit_report(records, args.out_dir):
        print(p)
    return EXIT_OK


def _lams_from(args, cfg):
    if args.lambda_min is not None or args.lambda_max is not None or args.lambda_count is not None:
        if None in (args.lambda_min, args.lambda_max, args.lambda_count):
            raise ConfigError("--lambda-min, --lambda-max and --lambda-count go together")
        return lambda_grid({"lambda_min": args.lambda_min, "lambda_max": args.lambda_max,
                            "lambda_count": args.lambda_count})
    if "sweep" not in cfg:
        raise ConfigError("no lambda grid: give --lambda-min/max/count or a sweep block")
    return lambda_grid(cfg["sweep"])


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    spec = _spec_checked(cfg, args.allow_violations)
    geom = build_geometry(cfg)
    lams = _lams_from(args, cfg)
    pol = parse_eps_policy(args.eps_policy) if args.eps_policy else eps_policy(cfg.get("sweep", {}))
    res = frequency_sweep(spec, lams, pol, geom, threads=args.threads, sign=cfg.get("sweep", {}).get("sign", 1))
    rows = [(r.lam, r.epsilon, r.norm, r.scaled, r.iterations, r.residual, r.wall_ms) for r in res.records]
    text = csv_text(SWEEP_COLUMNS, rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)
    if res.fit is not None:
        log.info("fit: p = %.4f, C = %.4g over %s", res.fit.p, res.fit.C, res.window)
    for lam, err in res.failures.items():
        log.warning("lambda = %g failed: %s", lam, err)
    return EXIT_OK


def cmd_norm(args) -> int:
    cfg = load_config(args.config)
    spec = _spec_checked(cfg, args.allow_violations)
    geom = build_geometry(cfg)
    pol = parse_eps_policy(args.eps_policy) if args.eps_policy else eps_policy(cfg.get("sweep", {}))
    params = SemiclassicalParams(args.lam, epsilon_for(args.lam, pol), cfg.get("sweep", {}).get("sign", 1))
    val, its, res, detail = geom.norm(spec, params, full_output=True)
    print(json.dumps({"lambda": args.lam, "epsilon": params.epsilon, "norm": val,
                      "norm_times_sqrt_lambda": val * math.sqrt(args.lam), "iters": its, "residual": res,
                      "detail": detail}, default=float))
    return EXIT_OK


def cmd_modes(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        spec = build_potential(cfg)
        d = spec.dimension
        pole = spec.poles[args.pole] if spec.poles else None
    else:
        d, pole = args.dimension, None
    if pole is not None and pole.angular_profile is not None:
        n = args.n_angular
        theta = 2 * np.pi * np.arange(n) / n
        basis = angular_eigenproblem(pole.angular_profile(theta), args.count)
    else:
        basis = analytic_basis(d, args.max_nu)
    rows = basis.table()
    text = csv_text(["k", "nu_sq", "multiplicity"], rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_fit(args) -> int:
    with open(args.input, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    lams = [float(r["lambda"]) for r in rows]
    norms = [float(r["norm"]) for r in rows]
    win = tuple(args.window) if args.window else default_window(lams)
    fit = fit_power_law(lams, norms, win)
    print(json.dumps({"p": fit.p, "C": fit.C, "r2": fit.r2, "window": list(win),
                      "outliers": [float(v) for v in fit.lams[fit.outliers]]}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mpres", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required)
        p.add_argument("--allow-violations", action="store_true")

    p = sub.add_parser("validate", help="check a potential against the standing hypotheses")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run every configured stage")
    common(p)
    p.add_argument("--out-dir")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-cache", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize finished runs")
    p.add_argument("runs", nargs="+", help="run directories or record.json files")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="truncated resolvent norm over a lambda grid")
    common(p)
    p.add_argument("--lambda-min", type=float)
    p.add_argument("--lambda-max", type=float)
    p.add_argument("--lambda-count", type=int)
    p.add_argument("--eps-policy", help="relative:<c> or absolute:<eps>")
    p.add_argument("--out")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("norm", help="truncated resolvent norm at one lambda")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--eps-policy")
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("modes", help="angular eigenvalue table")
    common(p, config_required=False)
    p.add_argument("--dimension", type=int, default=2)
    p.add_argument("--pole", type=int, default=0)
    p.add_argument("--max-nu", type=float, default=10.0)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--n-angular", type=int, default=1024)
    p.add_argument("--out")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("fit", help="power-law fit of a sweep CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--window", type=float, nargs=2)
    p.set_defaults(func=cmd_fit)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, HypothesisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ResolventError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
