"""Command-line entry point: ``heatlab <command> [options]``.

Exit codes: 0 success, 1 numerical failure, 2 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import store
from .discretize import GridError, assemble_laplacian, build_grid
from .eigensolve import EigenError, TailTooLarge, compute_basis, default_K
from .geometry import EccentricAnnulus, load_domain
from .heat import heat_content_spectral, heat_content_timestep, stitched_content
from .spectral import content_zeta, exit_moment_elliptic, exit_moment_quadrature, mellin_curve, zeta
from .verify import CHECKS, Resolution, SampleError, check_kac_bound, check_reflection
from .sweep import FDNoiseError, SweepConfig, exit_moment_sweep, run_sweep, savo_derivative, write_sweep

log = logging.getLogger("heatlab")


class ConfigError(ValueError):
    pass


# -- parsing helpers -------------------------------------------------------------


def parse_h(text):
    """``"1/128"`` or ``"0.01"``."""
    try:
        v = float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad spacing {text!r}") from exc
    if not v > 0:
        raise argparse.ArgumentTypeError("spacing must be positive")
    return v


def parse_grid(text):
    """Value lists: ``"a,b,c"``, ``"lo:hi:n"`` (linear) or ``"lo:hi:logspace:n"``."""
    text = text.strip()
    try:
        if ":" not in text:
            return [float(Fraction(p)) for p in text.split(",") if p.strip()]
        parts = text.split(":")
        if len(parts) == 4 and parts[2] == "logspace":
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[3])
            if lo <= 0 or hi <= 0:
                raise ValueError("logspace bounds must be positive")
            return np.logspace(math.log10(lo), math.log10(hi), n).tolist()
        if len(parts) == 3:
            return np.linspace(float(parts[0]), float(parts[1]), int(parts[2])).tolist()
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}: {exc}") from exc
    raise argparse.ArgumentTypeError(f"bad grid {text!r}")


def parse_ints(text):
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc


# -- output helpers ------------------------------------------------------------------


def _fmt(x):
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return format(x, ".17g")
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in sorted(x.items())) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def dumps(obj):
    """JSON text with every float at 17 significant digits and sorted keys."""
    return _fmt(obj) + "\n"


def emit(obj, out):
    text = dumps(obj)
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# -- shared pipeline ---------------------------------------------------------------


def _domain(args):
    if not args.domain:
        raise ConfigError("--domain is required")
    try:
        return load_domain(args.domain)
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load domain {args.domain!r}: {exc}") from exc


def resolution(domain, h, K, use_cache=True):
    grid = build_grid(domain, h)
    op = assemble_laplacian(grid, domain)
    K = default_K(grid.size) if K is None else K
    if K > grid.size // 4:
        raise ConfigError(f"K={K} exceeds a quarter of the {grid.size} grid nodes")
    basis = store.cached_basis(domain, h, K, op, grid, lambda: compute_basis(op, K, grid), use_cache)
    return Resolution(domain, grid, op, basis)


def cmd_eigs(args):
    res = resolution(_domain(args), args.h, args.K, not args.no_cache)
    emit([float(v) for v in res.basis.lambdas], args.out)


def cmd_content(args):
    dom = _domain(args)
    if args.route == "timestep":
        grid = build_grid(dom, args.h)
        curve = heat_content_timestep(assemble_laplacian(grid, dom), args.times)
    else:
        res = resolution(dom, args.h, args.K, not args.no_cache)
        if args.route == "spectral":
            curve = heat_content_spectral(res.basis, args.times, dom.dim)
        else:
            curve = stitched_content(res.basis, res.op, args.times, dom.dim)
    if args.out:
        curve.to_csv(args.out)
    else:
        w = csv.writer(sys.stdout)
        w.writerow(["t", "H", "err_est", "route"])
        for t, v, e in zip(curve.times, curve.values, curve.err_est):
            w.writerow([format(t, ".17g"), format(v, ".17g"), format(e, ".17g"), curve.route])


def cmd_spectral(args):
    dom = _domain(args)
    res = resolution(dom, args.h, args.K, not args.no_cache)
    records = []
    per = dom.outer.perimeter + (dom.obstacle.perimeter if dom.obstacle is not None else 0.0)
    for z in args.zeta or []:
        records.append({"kind": "zeta", **zeta(res.basis, z, dom.dim, dom.volume, per).to_dict()})
        records.append({"kind": "content_zeta", **content_zeta(res.basis, z, dom.volume).to_dict()})
    if args.moments:
        curve = mellin_curve(res.basis, res.op, dom.volume, per, dom.dim)
        for k in args.moments:
            for v in (exit_moment_quadrature(curve, k), exit_moment_elliptic(res.op, k)):
                d = v.to_dict()
                d["k"] = int(d.pop("z"))
                records.append({"kind": "exit_moment", **d})
    emit(records, args.out)


def cmd_verify(args):
    dom = _domain(args)
    if dom.reflection is None and any(c != "kac" for c in args.checks):
        raise ConfigError("reflection checks need a domain with a reflection")
    fine = resolution(dom, args.h, args.K, not args.no_cache)
    coarse = None
    if any(c != "kac" for c in args.checks):
        coarse = resolution(dom, 2 * args.h, args.K, not args.no_cache)
    jobs = [(c, t) for c in args.checks if c != "kac" for t in args.times]

    def run(job):
        c, t = job
        rep = check_reflection(fine, c, t, args.samples, args.seed, coarse)
        rep.notes = (rep.notes + f"; t={t:g}").lstrip("; ")
        return rep

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        reports = list(pool.map(run, jobs))
    if "kac" in args.checks:
        reports.insert(0, check_kac_bound(fine, args.kac_samples, args.seed))
    payload = {"domain": dom.to_dict(), "h": args.h,
               "reports": [r.to_dict() if args.full else r.summary() for r in reports]}
    emit(payload, args.out)
    for r in reports:
        log.info("%s %s %s", r.name, r.verdict, r.notes)


def cmd_sweep(args):
    cfg = SweepConfig(args.r1, args.r2, tuple(args.s), tuple(args.t), args.h, args.K or 120,
                      not args.no_confirm)
    result = run_sweep(cfg, jobs=args.jobs)
    out = args.out or "sweep.csv"
    side = write_sweep(result, out)
    if args.moments:
        table = exit_moment_sweep(cfg, args.moments)
        Path(str(out).rsplit(".", 1)[0] + ".moments.json").write_text(dumps(table.to_dict()))
    sys.stdout.write(dumps(result.verdicts))
    log.info("verdicts written to %s", side)
    if result.failures:
        raise RuntimeError(f"{len(result.failures)} column(s) failed: {result.failures}")


def cmd_savo(args):
    dom = EccentricAnnulus(args.r1, args.r2, args.s0)
    rep = savo_derivative(dom, args.t, args.h, args.delta)
    emit(rep.to_dict(), args.out)


def cmd_report(args):
    rows = []
    for path in args.inputs:
        data = json.loads(Path(path).read_text())
        if isinstance(data, dict) and "reports" in data:
            for r in data["reports"]:
                rows.append((Path(path).name, r["name"], r["verdict"], r.get("notes", "")))
        elif isinstance(data, dict) and "verdicts" in data:
            for k, v in sorted(data["verdicts"].items()):
                rows.append((Path(path).name, k, v, ""))
        elif isinstance(data, dict) and "rel_gap" in data:
            ok = "certified" if data["boundary_value"] > 0 and data["rel_gap"] <= 0.1 else "consistent"
            rows.append((Path(path).name, "savo", ok, f"rel_gap={data['rel_gap']:.3g}"))
        else:
            rows.append((Path(path).name, "?", "unrecognized", ""))
    width = max([len(r[1]) for r in rows] + [5])
    for src, name, verdict, note in rows:
        sys.stdout.write(f"{name:<{width}}  {verdict:<12} {src}  {note}\n")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source", "name", "verdict", "notes"])
            w.writerows(rows)


# -- argument parser -------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="heatlab", description="Dirichlet heat invariants on obstacle domains")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--no-cache", action="store_true", help="bypass the eigenbasis cache")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, need_domain=True):
        if need_domain:
            sp.add_argument("--domain", required=True, help="domain JSON file")
        sp.add_argument("--h", type=parse_h, default=1 / 64)
        sp.add_argument("--K", type=int, default=None)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("eigs", help="lowest Dirichlet eigenvalues")
    common(sp)
    sp.set_defaults(func=cmd_eigs)

    sp = sub.add_parser("content", help="heat content curve as CSV")
    common(sp)
    sp.add_argument("--times", type=parse_grid, default=parse_grid("0.05:2:logspace:20"))
    sp.add_argument("--route", choices=("spectral", "timestep", "stitched"), default="stitched")
    sp.set_defaults(func=cmd_content)

    sp = sub.add_parser("spectral", help="zeta values and exit moments")
    common(sp)
    sp.add_argument("--zeta", type=parse_grid, default=None)
    sp.add_argument("--moments", type=parse_ints, default=None)
    sp.set_defaults(func=cmd_spectral)

    sp = sub.add_parser("verify", help="sampled inequality checks")
    common(sp)
    sp.add_argument("--checks", type=lambda s: [c.strip() for c in s.split(",")], default=list(CHECKS))
    sp.add_argument("--times", type=parse_grid, default=[0.1, 0.3, 1.0])
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--kac-samples", type=int, default=10_000)
    sp.add_argument("--full", action="store_true", help="include every sample in the report")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sweep", help="displacement sweep on the eccentric annulus")
    common(sp, need_domain=False)
    sp.add_argument("--r1", type=float, default=0.25)
    sp.add_argument("--r2", type=float, default=1.0)
    sp.add_argument("--s", type=parse_grid, default=None)
    sp.add_argument("--t", type=parse_grid, default=[0.05, 0.1, 0.5, 1.0])
    sp.add_argument("--no-confirm", action="store_true", help="skip the h/sqrt(2) rerun")
    sp.add_argument("--moments", type=parse_ints, default=None)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("savo", help="boundary-integral derivative vs finite difference")
    common(sp, need_domain=False)
    sp.add_argument("--r1", type=float, default=0.25)
    sp.add_argument("--r2", type=float, default=1.0)
    sp.add_argument("--s0", type=float, default=0.3)
    sp.add_argument("--t", type=float, default=0.5)
    sp.add_argument("--delta", type=float, default=0.02)
    sp.set_defaults(func=cmd_savo)

    sp = sub.add_parser("report", help="summarize JSON outputs of other commands")
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--out", default=None, help="CSV summary table")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "command", None) == "sweep" and args.s is None:
        args.s = list(SweepConfig.default_s_grid(args.r1, args.r2))
    if getattr(args, "checks", None):
        bad = [c for c in args.checks if c not in CHECKS]
        if bad:
            sys.stderr.write(f"heatlab: unknown checks {bad}\n")
            return 2
    try:
        args.func(args)
    except (ConfigError, GridError, SampleError) as exc:
        sys.stderr.write(f"heatlab: invalid configuration: {exc}\n")
        return 2
    except (EigenError, TailTooLarge, FDNoiseError, RuntimeError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"heatlab: numerical failure: {exc}\n")
        return 1
    except ValueError as exc:
        sys.stderr.write(f"heatlab: invalid configuration: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
