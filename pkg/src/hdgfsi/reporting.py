"""Error norms at the final time, convergence rates and table emission."""

import csv
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .basis import element_points, evaluate_on, triangle_basis
from .materials import postprocess_pressure, to_compact, weighted_square
from .quadrature import quad_triangle

SAT = "sat"
# errors at or below this are treated as solver round-off when forming rates
SAT_FLOOR = 1e-12
COLUMNS = ("k", "h", "dt", "L", "e_sigma", "e_u", "e_p", "rate_sigma", "rate_u", "rate_p", "seconds")


@dataclass
class ErrorRecord:
    k: int
    h: float
    dt: float
    L: int
    e_sigma: float
    e_u: float
    e_p: float
    seconds: float = 0.0

    def __post_init__(self):
        for name in ("e_sigma", "e_u", "e_p"):
            v = getattr(self, name)
            if not (v >= 0 or math.isnan(v)):
                raise ValueError(f"{name} must be >= 0, got {v}")


def compute_errors(state, exact, mesh, materials, k, T=None, dt=None, L=None, h=None,
                   quad_degree=None, seconds=0.0, time_tol=1e-9):
    """H-norm stress, L2 velocity and L2 fluid-pressure errors at ``state.t``.

    ``exact`` provides ``stress`` and ``velocity`` (piecewise, ``(x, y, t)``)
    and ``pressure`` (fluid, may be ``None``). The quadrature is exact to
    degree ``max(2 (k + 3), quad_degree)``.
    """
    if T is not None and abs(state.t - T) > time_tol * max(1.0, abs(T)):
        raise ValueError(f"state is at t = {state.t!r}, expected T = {T!r}")
    t = state.t
    qd = max(2 * (k + 3), quad_degree or 0)
    rule = quad_triangle(qd)
    pts = element_points(mesh, rule)
    x, y = pts[..., 0], pts[..., 1]
    phi_k = triangle_basis(k).values(rule.points)
    phi_v = triangle_basis(k + 1).values(rule.points)

    sig_h = np.einsum("eci,qi->eqc", state.sigma, phi_k)
    sig_ex = to_compact(evaluate_on(exact.stress, x, y, mesh.solid, t))
    e_sigma = math.sqrt(max(weighted_square(sig_ex - sig_h, mesh, materials, rule), 0.0))

    u_h = np.einsum("eci,qi->ceq", state.u, phi_v)
    u_ex = evaluate_on(exact.velocity, x, y, mesh.solid, t)
    w = rule.weights[None, :] * mesh.det_jacobian[:, None]
    e_u = math.sqrt(float(np.sum(w * ((u_ex - u_h) ** 2).sum(0))))

    e_p = float("nan")
    fl = np.flatnonzero(~mesh.solid)
    if exact.pressure is not None and fl.size:
        p_h = postprocess_pressure(state.sigma, mesh, materials, fl) @ phi_k.T
        p_ex = np.asarray(exact.pressure(x[fl], y[fl], t), dtype=float)
        e_p = math.sqrt(float(np.sum(w[fl] * (p_ex - p_h) ** 2)))
    return ErrorRecord(
        k=k,
        h=float(h if h is not None else mesh.h),
        dt=float(dt if dt is not None else float("nan")),
        L=int(L if L is not None else state.n),
        e_sigma=e_sigma,
        e_u=e_u,
        e_p=e_p,
        seconds=float(seconds),
    )


def pairwise_rates(errors, sizes, floor=SAT_FLOOR):
    """Rates ``log(e / e~) / log(h / h~)`` for consecutive entries.

    Pairs where either error is at or below ``floor`` give :data:`SAT`.
    """
    errors = list(errors)
    sizes = list(sizes)
    if len(errors) != len(sizes):
        raise ValueError("errors and sizes differ in length")
    if len(errors) < 2:
        raise ValueError("need at least two records for a rate")
    out = []
    for (e0, h0), (e1, h1) in zip(zip(errors, sizes), zip(errors[1:], sizes[1:])):
        if h0 == h1:
            raise ValueError("consecutive sizes must differ")
        if math.isnan(e0) or math.isnan(e1):
            out.append(float("nan"))
        elif e0 <= floor or e1 <= floor:
            out.append(SAT)
        else:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out


def mean_rate(rates):
    """Arithmetic mean of the numeric rates; :data:`SAT` if none are numeric."""
    nums = [r for r in rates if r != SAT and not (isinstance(r, float) and math.isnan(r))]
    if not nums:
        return SAT if SAT in rates else float("nan")
    return float(np.mean(nums))


def rates(records, by="h"):
    """Per-quantity pairwise rates and their means for one refinement sequence.

    Returns ``{"sigma": (list, mean), "u": ..., "p": ...}``.
    """
    records = list(records)
    sizes = [getattr(r, by) for r in records]
    if len(records) < 2:
        raise ValueError("need at least two records for a rate")
    diffs = np.diff(sizes)
    if not (np.all(diffs < 0) or np.all(diffs > 0)):
        raise ValueError(f"sizes must be monotone, got {sizes}")
    out = {}
    for q in ("sigma", "u", "p"):
        r = pairwise_rates([getattr(x, f"e_{q}") for x in records], sizes)
        out[q] = (r, mean_rate(r))
    return out


def _groups(records, study):
    # consecutive runs sharing the fixed parameters form a refinement sequence
    key = {"h": lambda r: r.k, "dt": lambda r: (r.k, r.h), "p": lambda r: None}[study]
    groups = []
    for r in records:
        if groups and key(groups[-1][-1]) == key(r):
            groups[-1].append(r)
        else:
            groups.append([r])
    return groups


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def table_rows(records, study="h"):
    """Rows of the emitted table: data rows followed by a mean row per sequence."""
    rows = []
    by = "dt" if study == "dt" else "h"
    for grp in _groups(list(records), study):
        prev = None
        for r in grp:
            row = {c: "" for c in COLUMNS}
            row.update({c: _fmt(v) for c, v in asdict(r).items()})
            if prev is not None and study != "p":
                for q in ("sigma", "u", "p"):
                    row[f"rate_{q}"] = _fmt(pairwise_rates([getattr(prev, f"e_{q}"), getattr(r, f"e_{q}")],
                                                           [getattr(prev, by), getattr(r, by)])[0])
            rows.append(row)
            prev = r
        if len(grp) >= 2 and study != "p":
            rt = rates(grp, by=by)
            row = {c: "" for c in COLUMNS}
            row["k"] = _fmt(grp[0].k)
            row["h"] = "mean"
            for q in ("sigma", "u", "p"):
                row[f"rate_{q}"] = _fmt(rt[q][1])
            rows.append(row)
    return rows


def emit(records, path, fmt="csv", study="h"):
    """Write records with rates to ``path`` as CSV or markdown."""
    rows = table_rows(records, study)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=COLUMNS)
            w.writeheader()
            w.writerows(rows)
    elif fmt == "markdown":
        with open(path, "w") as fh:
            fh.write(markdown(rows))
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def _short(v, spec=".2e"):
    if v in ("", SAT):
        return v
    x = float(v)
    return "nan" if math.isnan(x) else format(x, spec)


def markdown(rows):
    head = "| k | h | dt | e_sigma | e_u | e_p |\n|---|---|---|---|---|---|\n"
    lines = []
    for r in rows:
        if r["h"] == "mean":
            lines.append(
                f"| rates |  |  | {_short(r['rate_sigma'], '.2f')} | {_short(r['rate_u'], '.2f')} "
                f"| {_short(r['rate_p'], '.2f')} |"
            )
        else:
            lines.append(
                f"| {r['k']} | {_short(r['h'], '.4g')} | {_short(r['dt'], '.3g')} | {_short(r['e_sigma'])} "
                f"| {_short(r['e_u'])} | {_short(r['e_p'])} |"
            )
    return head + "\n".join(lines) + ("\n" if lines else "")


def parse_csv(path):
    """Read the data rows of an emitted CSV back into :class:`ErrorRecord` objects."""
    names = [f.name for f in fields(ErrorRecord)]
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["h"] == "mean":
                continue
            vals = {n: row[n] for n in names}
            out.append(
                ErrorRecord(
                    k=int(vals["k"]),
                    h=float(vals["h"]),
                    dt=float(vals["dt"]),
                    L=int(vals["L"]),
                    e_sigma=float(vals["e_sigma"]),
                    e_u=float(vals["e_u"]),
                    e_p=float(vals["e_p"]),
                    seconds=float(vals["seconds"]),
                )
            )
    return out
