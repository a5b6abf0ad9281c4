"""``hdg-fsi`` command-line driver.

Exit codes: 0 success, 1 run failure, 2 configuration or input error,
3 acceptance-threshold or property-suite failure.
"""

import argparse
import csv
import math
import os
import sys
import time

import numpy as np

from . import benchmarks, verify
from .config import ConfigError, load
from .mesh import MeshError, check_labels, load_mesh
from .reporting import SAT, compute_errors, emit, rates
from .studies import StudyError, dt_rule, run_case, semilog_fit
from .timestepping import CrankNicolson, EnergyReport, steps_for

EXIT_OK, EXIT_RUN, EXIT_CONFIG, EXIT_THRESHOLD = 0, 1, 2, 3


def _err(msg):
    print(f"hdg-fsi: {msg}", file=sys.stderr)


def _steps(cfg, T, h, k):
    if cfg.L is not None:
        return cfg.L
    if cfg.dt is not None:
        return steps_for(T, cfg.dt)
    return steps_for(T, dt_rule(h, k, cfg.dt_c))


def _log(rec):
    print(
        f"k={rec.k} h={rec.h:.6g} dt={rec.dt:.6g} L={rec.L}  e_sigma={rec.e_sigma:.4e} "
        f"e_u={rec.e_u:.4e} e_p={rec.e_p:.4e}  ({rec.seconds:.1f} s)",
        flush=True,
    )


def _mesh_for(cfg, pb, h):
    mesh = pb.make_mesh(h)
    return mesh, (mesh.h if h is None else h)


# -- convergence --------------------------------------------------------------


def _sweep(cfg, study):
    recs = []
    kw = dict(mode=cfg.init, solver=cfg.solver, tol=cfg.tol)
    if study == "h":
        for k in cfg.degrees():
            pb = cfg.build_problem(k)
            for h in cfg.sizes():
                mesh, hv = _mesh_for(cfg, pb, h)
                rec = run_case(pb, hv, k, pb.T, _steps(cfg, pb.T, hv, k), mesh=mesh, **kw)
                _log(rec)
                recs.append(rec)
    elif study == "dt":
        if cfg.dts is None:
            raise ConfigError("a dt study needs dts")
        if len(cfg.degrees()) != 1 or len(cfg.sizes()) != 1:
            raise ConfigError("a dt study needs a single k and a single h")
        k, h = cfg.degrees()[0], cfg.sizes()[0]
        pb = cfg.build_problem(k)
        mesh, hv = _mesh_for(cfg, pb, h)
        for dt in cfg.dts:
            rec = run_case(pb, hv, k, pb.T, max(1, int(round(pb.T / dt))), mesh=mesh, **kw)
            _log(rec)
            recs.append(rec)
    else:
        if len(cfg.sizes()) != 1:
            raise ConfigError("a p study needs a single h")
        if cfg.L is None and cfg.dt is None:
            raise ConfigError("a p study needs a fixed L or dt")
        (h,) = cfg.sizes()
        mesh = None
        for k in cfg.degrees():
            pb = cfg.build_problem(k)
            if mesh is None:
                mesh, hv = _mesh_for(cfg, pb, h)
            L = cfg.L if cfg.L is not None else max(1, int(round(pb.T / cfg.dt)))
            rec = run_case(pb, hv, k, pb.T, L, mesh=mesh, **kw)
            _log(rec)
            recs.append(rec)
    return recs


def check_thresholds(cfg, recs, study):
    """Messages for every configured threshold the records violate."""
    bad = []
    if study == "p":
        e = [r.e_sigma for r in recs]
        if cfg.min_abs_r is not None:
            if any(b >= a for a, b in zip(e, e[1:])):
                bad.append("e_sigma is not strictly decreasing in k")
            slope, r = semilog_fit([x.k for x in recs], e)
            print(f"semilog fit: slope {slope:.4f}, correlation {r:.4f}")
            if not slope < 0:
                bad.append(f"semilog slope {slope:.4f} is not negative")
            if abs(r) < cfg.min_abs_r:
                bad.append(f"|r| = {abs(r):.4f} below {cfg.min_abs_r}")
        return bad
    by = "dt" if study == "dt" else "h"
    groups = {}
    for r in recs:
        groups.setdefault(r.k, []).append(r)
    for k, grp in groups.items():
        if len(grp) < 2:
            continue
        rt = rates(grp, by=by)
        for q in ("sigma", "u"):
            pair, mean = rt[q]
            lo = getattr(cfg, f"min_rate_{q}")
            hi = getattr(cfg, f"max_rate_{q}")
            # h studies bound the mean, dt studies every observed rate
            vals = [mean] if study == "h" else [x for x in pair if x != SAT]
            shift = k if study == "h" else 0
            for v in vals:
                if v == SAT or (isinstance(v, float) and math.isnan(v)):
                    continue
                if lo is not None and v < lo + shift:
                    bad.append(f"k={k}: {q} rate {v:.3f} below {lo + shift:.3f}")
                if hi is not None and v > hi + shift:
                    bad.append(f"k={k}: {q} rate {v:.3f} above {hi + shift:.3f}")
    return bad


def cmd_convergence(args):
    cfg = load(args.config)
    out = cfg.output
    cfg.write_resolved(out)
    try:
        recs = _sweep(cfg, args.study)
    except StudyError as exc:
        _err(str(exc))
        return EXIT_RUN
    emit(recs, os.path.join(out, f"rates_{args.study}.csv"), "csv", args.study)
    emit(recs, os.path.join(out, f"rates_{args.study}.md"), "markdown", args.study)
    bad = check_thresholds(cfg, recs, args.study)
    for msg in bad:
        _err(f"threshold: {msg}")
    return EXIT_THRESHOLD if bad else EXIT_OK


# -- single run ----------------------------------------------------------------


def write_probe_csv(path, name, x, v):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", name])
        for a, b in zip(x, v):
            w.writerow([repr(float(a)), repr(float(b))])


def cmd_run(args):
    cfg = load(args.config)
    ks = cfg.degrees()
    hs = cfg.sizes()
    if len(ks) != 1 or len(hs) != 1:
        raise ConfigError("run needs a single k and a single h")
    k, h = ks[0], hs[0]
    pb = cfg.build_problem(k)
    out = cfg.output
    cfg.write_resolved(out)
    t0 = time.perf_counter()
    try:
        mesh, hv = _mesh_for(cfg, pb, h)
        L = _steps(cfg, pb.T, hv, k)
        integ = CrankNicolson(pb, mesh, k, pb.T / L, solver=cfg.solver, tol=cfg.tol)
        rep = EnergyReport()
        state = integ.run(integ.initialize(cfg.init), L, [rep])
    except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        _err(f"run failed: {exc}")
        return EXIT_RUN
    rep.write_csv(os.path.join(out, "energy.csv"))
    print(f"{pb.name}: k={k} h={hv:.6g} L={L} dt={pb.T / L:.6g} T={state.t:.6g} "
          f"({time.perf_counter() - t0:.1f} s)")
    if cfg.problem == "example2":
        pr = benchmarks.probes(state, mesh, k, pb.materials, n=cfg.probes)
        for name, (x, v) in pr.items():
            write_probe_csv(os.path.join(out, f"probe_{name}.csv"), name, x, v)
    elif pb.exact is not None:
        rec = compute_errors(state, pb.exact, mesh, pb.materials, k, T=pb.T, dt=pb.T / L, L=L, h=hv)
        _log(rec)
        emit([rec], os.path.join(out, "errors.csv"), "csv", "h")
    return EXIT_OK


# -- mesh and verify -------------------------------------------------------------


def cmd_mesh_info(args):
    mesh = load_mesh(args.path)
    check_labels(mesh)
    print(f"vertices  {mesh.n_vertices}")
    print(f"elements  {mesh.n_elements} (solid {int(mesh.solid.sum())}, fluid {int((~mesh.solid).sum())})")
    print(f"facets    {mesh.n_facets} (boundary {mesh.boundary_facets.size}, interface {mesh.interface_facets.size})")
    print(f"h         {mesh.h:.6g}")
    print(f"gamma     {mesh.gamma:.6g}")
    print(f"area      solid {mesh.subdomain_area(True):.6g}, fluid {mesh.subdomain_area(False):.6g}")
    for name in sorted(mesh.labels):
        print(f"label     {name}: {len(mesh.labels[name])} facets")
    return EXIT_OK


def cmd_verify(args):
    results = verify.run_all(args.suite or None, report=print if args.verbose else None)
    for r in results:
        if not args.verbose:
            print(r.line())
    ok = all(r.passed for r in results)
    print("all suites passed" if ok else "suite failures")
    return EXIT_OK if ok else EXIT_THRESHOLD


def build_parser():
    p = argparse.ArgumentParser(prog="hdg-fsi", description="HDG solver for linear fluid-structure interaction")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mesh", help="mesh utilities")
    msub = m.add_subparsers(dest="mesh_command", required=True)
    info = msub.add_parser("info", help="summarise a mesh file")
    info.add_argument("path")
    info.set_defaults(func=cmd_mesh_info)

    c = sub.add_parser("convergence", help="run an h, dt or p refinement study")
    c.add_argument("--study", choices=("h", "p", "dt"), required=True)
    c.add_argument("--config", required=True)
    c.set_defaults(func=cmd_convergence)

    r = sub.add_parser("run", help="single run with energy log and probes")
    r.add_argument("--config", required=True)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--suite", action="append", choices=sorted(verify.SUITES))
    v.add_argument("-v", "--verbose", action="store_true")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MeshError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
