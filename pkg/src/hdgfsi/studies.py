"""Refinement sweeps in h, dt and k for manufactured problems."""

import time

import numpy as np

from .reporting import compute_errors
from .timestepping import CrankNicolson, steps_for

DT_CONSTANT = 0.1


def dt_rule(h, k, c=DT_CONSTANT):
    """Nominal time step ``c h^((k+2)/2)``."""
    return c * h ** ((k + 2) / 2.0)


class StudyError(RuntimeError):
    def __init__(self, k, h, dt, cause):
        super().__init__(f"run failed at (k={k}, h={h:g}, dt={dt:g}): {cause}")
        self.k, self.h, self.dt = k, h, dt


def run_case(problem, h, k, T, steps, mode="consistent", solver="direct", tol=1e-10,
             observers=(), mesh=None):
    """One manufactured run to ``T`` in ``steps`` uniform steps; returns an ErrorRecord."""
    dt = T / steps
    t0 = time.perf_counter()
    try:
        mesh = problem.make_mesh(h) if mesh is None else mesh
        integ = CrankNicolson(problem, mesh, k, dt, solver=solver, tol=tol)
        state = integ.run(integ.initialize(mode), steps, observers)
        rec = compute_errors(state, problem.exact, mesh, problem.materials, k, T=T, dt=dt, L=steps, h=h,
                             seconds=time.perf_counter() - t0)
    except Exception as exc:  # noqa: BLE001 - re-raised with the failing triple
        raise StudyError(k, h, dt, exc) from exc
    rec.seconds = time.perf_counter() - t0
    return rec


def h_study(problem, ks, hs, T, c=DT_CONSTANT, log=None, **kw):
    """Space refinement with ``dt = T / ceil(T / (c h^((k+2)/2)))``."""
    out = []
    for k in ks:
        for h in hs:
            L = steps_for(T, dt_rule(h, k, c))
            rec = run_case(problem, h, k, T, L, **kw)
            out.append(rec)
            if log:
                log(rec)
    return out


def dt_study(problem, k, h, T, dts, log=None, **kw):
    """Time refinement at fixed mesh; ``L = round(T / dt)`` and the actual step is T / L."""
    out = []
    for dt in dts:
        L = max(1, int(round(T / dt)))
        rec = run_case(problem, h, k, T, L, **kw)
        out.append(rec)
        if log:
            log(rec)
    return out


def p_study(problem, ks, h, T, dt, log=None, **kw):
    """Degree refinement at fixed mesh and time step."""
    out = []
    L = max(1, int(round(T / dt)))
    for k in ks:
        rec = run_case(problem, h, k, T, L, **kw)
        out.append(rec)
        if log:
            log(rec)
    return out


def semilog_fit(ks, errors):
    """Least-squares slope and correlation of log(e) against k."""
    y = np.log(np.asarray(errors, dtype=float))
    x = np.asarray(ks, dtype=float)
    slope = np.polyfit(x, y, 1)[0]
    r = float(np.corrcoef(x, y)[0, 1])
    return float(slope), r

