"""Property suites: energy balance, exactness, trace inequality, projection rates.

Each suite returns a :class:`SuiteResult`; :func:`run_all` runs them in
order. The suites are also the mutation targets of :mod:`hdgfsi.hooks`: a
flipped stabilisation sign must break the energy suite and a wrong trace
coefficient in ``A_f`` must break the exactness suite.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import benchmarks
from .basis import element_points, project_elements, triangle_basis
from .materials import L1, compliance_matrix, to_compact, weighted_square
from .mesh import generate_structured
from .quadrature import quad_edge, quad_triangle
from .reporting import compute_errors
from .timestepping import CrankNicolson, EnergyReport, State, _compact_coeffs

ENERGY_TOL = 1e-9
EXACTNESS_TOL = 1e-9
RATE_SLACK = 0.2
GROWTH_LIMIT = 1.1
SUITE_HS = (1 / 4, 1 / 8, 1 / 16, 1 / 32)
SUITE_KS = (0, 1, 2, 3, 4)


@dataclass
class SuiteResult:
    name: str
    passed: bool
    details: list = field(default_factory=list)

    def line(self):
        return f"{self.name:<18} {'PASS' if self.passed else 'FAIL'}"


def unit_square(h, split=0.5):
    """Structured mesh of (0, 1)^2, fluid below ``split`` and solid above."""
    n = int(round(1.0 / h))
    return generate_structured((0.0, 1.0, 0.0, 1.0), n, n, split_y=split)


# -- energy ------------------------------------------------------------------


def energy_balance(k, h=1 / 8, steps=50, dt=0.01, materials=L1, seed=0):
    """Run ``steps`` unforced steps from a random state; returns the report.

    Homogeneous Dirichlet data, no source and no interface jump, so the
    discrete energy can only decrease by the recorded dissipation.
    """
    mat = materials.with_(beta_s=0.0)
    pb = replace(benchmarks.example1(mat), source=None, interface_jump=None)
    mesh = pb.make_mesh(h)
    cn = CrankNicolson(pb, mesh, k, dt)
    z = cn.zero_state()
    rng = np.random.default_rng(seed)
    st = State(0, 0.0, rng.standard_normal(z.sigma.shape), rng.standard_normal(z.u.shape), z.trace, z.d)
    rep = EnergyReport()
    cn.run(st, steps, [rep])
    return rep


def energy_suite(ks=(0, 1, 2), tol=ENERGY_TOL, **kw):
    """Balance ``|E^L + sum D^n - E^0| / E^0 <= tol`` with ``D^n >= 0`` and E non-increasing."""
    ok = True
    details = []
    for k in ks:
        rep = energy_balance(k, **kw)
        bal = rep.relative_balance()
        e = np.asarray(rep.energy)
        d_min = min(rep.dissipation)
        mono = bool(np.all(np.diff(e) <= tol * e[0]))
        good = bal <= tol and d_min >= -tol * e[0] and mono
        ok &= good
        details.append(f"k={k}: balance {bal:.2e}, min D {d_min:.2e}, E non-increasing {mono}")
    return SuiteResult("energy", ok, details)


# -- exactness ---------------------------------------------------------------


def exactness_errors(k, h, steps=5, mode="consistent", seed=1234):
    pb = benchmarks.polynomial_exactness_case(k, seed=seed)
    mesh = pb.make_mesh(h)
    cn = CrankNicolson(pb, mesh, k, pb.T / steps)
    st = cn.run(cn.initialize(mode), steps)
    return compute_errors(st, pb.exact, mesh, pb.materials, k, T=pb.T, dt=pb.T / steps, L=steps, h=h)


def exactness_suite(ks=(0, 1, 2), hs=(1 / 2, 1 / 4), tol=EXACTNESS_TOL):
    """The polynomial case is reproduced to ``tol`` in the stress and velocity norms."""
    ok = True
    details = []
    for k in ks:
        for h in hs:
            rec = exactness_errors(k, h)
            good = rec.e_sigma <= tol and rec.e_u <= tol
            ok &= good
            details.append(f"k={k} h={h:g}: e_sigma {rec.e_sigma:.2e}, e_u {rec.e_u:.2e}")
    return SuiteResult("exactness", ok, details)


# -- discrete trace inequality ------------------------------------------------


def _edge_data(mesh, degree, k):
    """Reference points, outward normals and lengths of each local edge."""
    rule = quad_edge(degree)
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    pts = np.stack([ref[l] + rule.points[:, None] * (ref[(l + 1) % 3] - ref[l]) for l in range(3)])
    phi = np.stack([triangle_basis(k).values(p) for p in pts])  # (3, nq, nk)
    p = mesh.vertices[mesh.triangles]
    tang = np.roll(p, -1, axis=1) - p  # (ne, 3, 2), counter-clockwise
    length = np.linalg.norm(tang, axis=2)
    normal = np.stack([tang[..., 1], -tang[..., 0]], axis=-1) / length[..., None]
    return rule, phi, normal, length


def _normal_trace_matrix(mesh, k, degree=None):
    """Per element, the Gram matrix of sum_F h_F / (k+1)^2 int_F |tau n|^2."""
    rule, phi, n, hf = _edge_data(mesh, degree or 2 * k + 2, k)
    nk = phi.shape[-1]
    ne = mesh.n_elements
    # tau n in compact components: (s11 n1 + s12 n2, s12 n1 + s22 n2)
    sel = np.zeros((ne, 3, 2, 3))
    sel[..., 0, 0] = n[..., 0]
    sel[..., 0, 2] = n[..., 1]
    sel[..., 1, 1] = n[..., 1]
    sel[..., 1, 2] = n[..., 0]
    gram = np.einsum("lqi,q,lqj->lij", phi, rule.weights, phi)  # (3, nk, nk)
    w = hf**2 / (k + 1) ** 2  # h_F from the scaling times |F| from the measure
    b = np.einsum("el,elca,elcb,lij->eaibj", w, sel, sel, gram)
    return b.reshape(ne, 3 * nk, 3 * nk)


def _stress_mass(mesh, k, mat):
    nk = triangle_basis(k).size
    w = np.stack([compliance_matrix(*mat.lame(False)), compliance_matrix(*mat.lame(True))])[mesh.solid.astype(int)]
    m = mesh.det_jacobian[:, None, None, None, None] * np.einsum("eab,ij->eaibj", w, np.eye(nk))
    return m.reshape(mesh.n_elements, 3 * nk, 3 * nk)


def trace_ratio(mesh, k, mat=L1, n_random=200, seed=0):
    """Sharp and sampled values of ``||(h_F^1/2/(k+1)) tau n||_dT / ||tau||_H`` over P_k.

    The sharp value is the largest elementwise generalised eigenvalue; the
    sampled one is the maximum over ``n_random`` random global fields.
    """
    b = _normal_trace_matrix(mesh, k)
    m = _stress_mass(mesh, k, mat)
    c = np.linalg.cholesky(m)
    ci = np.linalg.inv(c)
    sym = ci @ b @ np.swapaxes(ci, 1, 2)
    sharp = math.sqrt(float(np.linalg.eigvalsh(sym)[:, -1].max()))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_random, mesh.n_elements, b.shape[1]))
    num = np.einsum("rei,eij,rej->r", x, b, x)
    den = np.einsum("rei,eij,rej->r", x, m, x)
    sampled = float(np.sqrt(num / den).max())
    return sharp, sampled


def trace_suite(ks=SUITE_KS, hs=SUITE_HS, mat=L1, limit=GROWTH_LIMIT):
    """Trace ratio bounded, growing by less than ``limit`` under halving h and raising k."""
    ok = True
    details = []
    table = {}
    for k in ks:
        for h in hs:
            sharp, sampled = trace_ratio(unit_square(h), k, mat)
            table[k, h] = sharp
            good = np.isfinite(sharp) and sampled <= sharp * (1 + 1e-10)
            ok &= good
            details.append(f"k={k} h={h:g}: sup {sharp:.4g}, sampled max {sampled:.4g}")
    for k in ks:
        for h0, h1 in zip(hs, hs[1:]):
            ok &= table[k, h1] < limit * table[k, h0]
    for k0, k1 in zip(ks, ks[1:]):
        for h in hs:
            ok &= table[k1, h] < limit * table[k0, h]
    return SuiteResult("trace-inequality", ok, details)


# -- projection rates ---------------------------------------------------------


def _scalar_field(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def _tensor_field(x, y):
    a = np.sin(np.pi * x) * np.sin(np.pi * y)
    b = np.cos(np.pi * x) * np.sin(np.pi * y)
    c = np.cos(np.pi * x) * np.cos(np.pi * y)
    return np.stack([np.stack([a, b]), np.stack([b, c])])


def projection_error(mesh, m, f=_scalar_field):
    """``||f - Pi^m f||_0`` for a scalar field."""
    coef = project_elements(f, mesh, m, quad_degree=2 * m + 10)
    rule = quad_triangle(2 * m + 10)
    pts = element_points(mesh, rule)
    diff = f(pts[..., 0], pts[..., 1]) - coef @ triangle_basis(m).values(rule.points).T
    return math.sqrt(float(np.einsum("eq,q,e->", diff**2, rule.weights, mesh.det_jacobian)))


def tensor_projection_error(mesh, k, mat=L1, f=_tensor_field):
    """``||tau - Pi^k tau||_H + ||(h_F^1/2/(k+1)) (tau - Pi^k tau) n||_dT``."""
    qd = 2 * k + 10
    coef = _compact_coeffs(project_elements(f, mesh, k, quad_degree=qd))
    rule = quad_triangle(qd)
    pts = element_points(mesh, rule)
    diff = to_compact(f(pts[..., 0], pts[..., 1])) - np.einsum("eci,qi->eqc", coef, triangle_basis(k).values(rule.points))
    vol = math.sqrt(max(weighted_square(diff, mesh, mat, rule), 0.0))

    erule, phi, n, hf = _edge_data(mesh, qd, k)
    p = mesh.vertices[mesh.triangles]
    tang = np.roll(p, -1, axis=1) - p
    xq = p[:, :, None, :] + erule.points[None, None, :, None] * tang[:, :, None, :]  # (ne, 3, nq, 2)
    t = f(xq[..., 0], xq[..., 1])  # (2, 2, ne, 3, nq)
    th = np.einsum("eci,lqi->elqc", coef, phi)
    full = np.stack([np.stack([th[..., 0], th[..., 2]]), np.stack([th[..., 2], th[..., 1]])])
    dn = np.einsum("abelq,elb->aelq", t - full, n)
    w = hf**2 / (k + 1) ** 2
    tr = math.sqrt(float(np.einsum("aelq,q,el->", dn**2, erule.weights, w)))
    return vol + tr


def fitted_slope(hs, errors):
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def projection_suite(ks=SUITE_KS, hs=SUITE_HS, mat=L1, slack=RATE_SLACK):
    """Both projection errors decay with slope within ``slack`` of ``k + 1``."""
    ok = True
    details = []
    meshes = [unit_square(h) for h in hs]
    for k in ks:
        s1 = fitted_slope(hs, [projection_error(m, k) for m in meshes])
        s2 = fitted_slope(hs, [tensor_projection_error(m, k, mat) for m in meshes])
        good = abs(s1 - (k + 1)) <= slack and abs(s2 - (k + 1)) <= slack
        ok &= good
        details.append(f"k={k}: L2 slope {s1:.3f}, H + normal-trace slope {s2:.3f} (expected {k + 1})")
    return SuiteResult("projection-rates", ok, details)


SUITES = {
    "energy": energy_suite,
    "exactness": exactness_suite,
    "trace-inequality": trace_suite,
    "projection-rates": projection_suite,
}


def run_all(names=None, report=print):
    """Run the named suites (all by default); returns the list of results."""
    out = []
    for name in names or SUITES:
        res = SUITES[name]()
        if report:
            for d in res.details:
                report(f"  {d}")
            report(res.line())
        out.append(res)
    return out
