"""Problem definitions: manufactured solutions and the pressure-pulse channel.

Fields follow the convention of :mod:`hdgfsi.basis`: ``f(x, y, t)`` returns
``(2, *x.shape)`` for vectors and ``(2, 2, *x.shape)`` for tensors.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly

from .assembly import dirichlet, normal_stress, tangential_stress
from .basis import Piecewise, eval_at_points, locate
from .materials import BLOOD, L1, L2, postprocess_pressure
from .mesh import classify_facets, generate_structured

PI = math.pi


@dataclass
class Problem:
    """Everything the integrator needs besides mesh, degree and time step.

    ``make_mesh(h)`` builds a labelled mesh of nominal size ``h``. ``bcs``
    maps boundary labels to :class:`hdgfsi.assembly.BoundaryCondition`.
    ``sigma0`` is a tensor field (the solid part is always used, the fluid
    part is ignored); ``grad_u0`` is needed by the ``projected``
    initialisation.
    """

    name: str
    materials: object
    make_mesh: object
    bcs: dict
    source: object = None
    interface_jump: object = None
    u0: object = None
    grad_u0: object = None
    sigma0: object = None
    d0: object = None
    exact: object = None
    T: float = 1.0
    extras: dict = field(default_factory=dict)


@dataclass
class ExactSolution:
    """Exact fields of a manufactured problem.

    ``stress`` is the tensor the scheme approximates (physical fluid stress
    ``2 mu_f eps(u_f) - p I`` and ``C_s eps(d)`` in the solid);
    ``stress_penalty`` uses ``C_f eps(u_f)`` on the fluid side instead.
    """

    velocity: Piecewise
    stress: Piecewise
    stress_penalty: Piecewise
    pressure: object
    displacement: object
    source: Piecewise
    interface_jump: object


def _zeros2(x):
    return np.zeros((2,) + np.shape(x))


def _tensor(t11, t22, t12):
    return np.stack([np.stack([t11, t12]), np.stack([t12, t22])])


def _unit_square_mesh(h, y0, y1, split):
    n = int(round(1.0 / h))
    if n < 1 or abs(n * h - 1.0) > 1e-9:
        raise ValueError(f"h must be 1/n for an integer n, got {h}")
    ny = (y1 - y0) * n
    if abs(ny - round(ny)) > 1e-9:
        raise ValueError(f"h = 1/{n} does not resolve the interface at y = {split}")
    mesh = generate_structured((0.0, 1.0, y0, y1), n, int(round(ny)), split_y=split)
    return classify_facets(
        mesh, {"gamma_f": lambda x, y: y < split, "gamma_s": lambda x, y: y > split}
    )


def example1_mesh(h):
    """Structured mesh of (0,1)x(-1,0.5) split at y = 0; needs h = 1/n with n even."""
    return _unit_square_mesh(h, -1.0, 0.5, 0.0)


# -- Example 1 -------------------------------------------------------------


class Example1Fields:
    """Closed-form fields and hand-computed derivatives of the manufactured pair.

    With ``a = 4 pi (y + 1) / 3`` the divergence-free profile is
    ``w = (sin^2(2 pi x) sin(2a), -3/2 sin(4 pi x) sin^2(a))``; the fluid
    velocity is ``w sin(2t)``, the solid displacement ``w sin^2(t)`` and the
    pressure ``sin(2 pi x) sin(2 pi y) sin(t)``.
    """

    def __init__(self, mat):
        self.mat = mat

    @staticmethod
    def _a(y):
        return 4.0 * PI * (y + 1.0) / 3.0

    def w(self, x, y):
        a = self._a(y)
        return np.stack([np.sin(2 * PI * x) ** 2 * np.sin(2 * a), -1.5 * np.sin(4 * PI * x) * np.sin(a) ** 2])

    def grad_w(self, x, y):
        """(2, 2, ...) with entry [i, j] = d w_i / d x_j."""
        a = self._a(y)
        s4 = np.sin(4 * PI * x)
        return np.stack(
            [
                np.stack([2 * PI * s4 * np.sin(2 * a), 8 * PI / 3 * np.sin(2 * PI * x) ** 2 * np.cos(2 * a)]),
                np.stack([-6 * PI * np.cos(4 * PI * x) * np.sin(a) ** 2, -2 * PI * s4 * np.sin(2 * a)]),
            ]
        )

    def lap_w(self, x, y):
        a = self._a(y)
        s4 = np.sin(4 * PI * x)
        return np.stack(
            [
                8 * PI**2 * np.cos(4 * PI * x) * np.sin(2 * a)
                - 64 * PI**2 / 9 * np.sin(2 * PI * x) ** 2 * np.sin(2 * a),
                24 * PI**2 * s4 * np.sin(a) ** 2 - 16 * PI**2 / 3 * s4 * np.cos(2 * a),
            ]
        )

    def eps_w(self, x, y):
        g = self.grad_w(x, y)
        return 0.5 * (g + np.swapaxes(g, 0, 1))

    # time profiles
    @staticmethod
    def _tf(t):
        return np.sin(2 * t)

    # fluid
    def u_f(self, x, y, t):
        return self.w(x, y) * np.sin(2 * t)

    def du_f_dt(self, x, y, t):
        return 2 * self.w(x, y) * np.cos(2 * t)

    def p(self, x, y, t):
        return np.sin(2 * PI * x) * np.sin(2 * PI * y) * np.sin(t)

    def grad_p(self, x, y, t):
        return np.stack(
            [
                2 * PI * np.cos(2 * PI * x) * np.sin(2 * PI * y),
                2 * PI * np.sin(2 * PI * x) * np.cos(2 * PI * y),
            ]
        ) * np.sin(t)

    def sigma_f(self, x, y, t):
        p = self.p(x, y, t)
        eye = _tensor(np.ones_like(p), np.ones_like(p), np.zeros_like(p))
        return 2 * self.mat.mu_f * self.eps_w(x, y) * np.sin(2 * t) - p * eye

    def sigma_f_penalty(self, x, y, t):
        # div w = 0, so C_f eps(u_f) = 2 mu_f eps(u_f)
        return 2 * self.mat.mu_f * self.eps_w(x, y) * np.sin(2 * t)

    def div_sigma_f(self, x, y, t):
        return self.mat.mu_f * self.lap_w(x, y) * np.sin(2 * t) - self.grad_p(x, y, t)

    def F_f(self, x, y, t):
        return self.mat.rho_f * self.du_f_dt(x, y, t) - self.div_sigma_f(x, y, t)

    # solid
    def d(self, x, y, t):
        return self.w(x, y) * np.sin(t) ** 2

    def u_s(self, x, y, t):
        return self.w(x, y) * np.sin(2 * t)

    def d2d_dt2(self, x, y, t):
        return 2 * self.w(x, y) * np.cos(2 * t)

    def sigma_s(self, x, y, t):
        # div w = 0 removes the lam_s trace term
        return 2 * self.mat.mu_s * self.eps_w(x, y) * np.sin(t) ** 2

    def div_sigma_s(self, x, y, t):
        return self.mat.mu_s * self.lap_w(x, y) * np.sin(t) ** 2

    def F_s(self, x, y, t):
        return self.mat.rho_s * self.d2d_dt2(x, y, t) - self.div_sigma_s(x, y, t)

    def jump(self, x, y, t):
        """sigma_f n_f + sigma_s n_s on y = 0 with n_f = (0, 1)."""
        sf = self.sigma_f(x, y, t)
        ss = self.sigma_s(x, y, t)
        return sf[:, 1] - ss[:, 1]

    def exact(self):
        return ExactSolution(
            velocity=Piecewise(self.u_f, self.u_s),
            stress=Piecewise(self.sigma_f, self.sigma_s),
            stress_penalty=Piecewise(self.sigma_f_penalty, self.sigma_s),
            pressure=self.p,
            displacement=self.d,
            source=Piecewise(self.F_f, self.F_s),
            interface_jump=self.jump,
        )


def example1(materials="L1", lam_f=None):
    """Manufactured benchmark on (0,1)x(-1,0) (fluid) and (0,1)x(0,0.5) (solid)."""
    mat = {"L1": L1, "L2": L2}.get(materials, materials) if isinstance(materials, str) else materials
    if isinstance(mat, str):
        raise ValueError(f"unknown parameter set {materials!r}")
    if lam_f is not None:
        mat = mat.with_(lam_f=lam_f)
    fields = Example1Fields(mat)
    ex = fields.exact()
    zero_u = lambda x, y: _zeros2(x)  # noqa: E731
    return Problem(
        name="example1",
        materials=mat,
        make_mesh=example1_mesh,
        bcs={"gamma_f": dirichlet(), "gamma_s": dirichlet()},
        source=ex.source,
        interface_jump=ex.interface_jump,
        u0=zero_u,
        grad_u0=lambda x, y: np.zeros((2, 2) + np.shape(x)),
        sigma0=lambda x, y: np.zeros((2, 2) + np.shape(x)),
        d0=zero_u,
        exact=ex,
        T=0.3,
        extras={"fields": fields},
    )


# -- polynomial exactness -----------------------------------------------------


class Poly2:
    """Bivariate polynomial ``sum c[i, j] x^i y^j``."""

    def __init__(self, c):
        self.c = np.atleast_2d(np.asarray(c, dtype=float))

    def __call__(self, x, y):
        return npoly.polyval2d(x, y, self.c)

    def dx(self):
        return Poly2(npoly.polyder(self.c, axis=0)) if self.c.shape[0] > 1 else Poly2([[0.0]])

    def dy(self):
        return Poly2(npoly.polyder(self.c, axis=1)) if self.c.shape[1] > 1 else Poly2([[0.0]])

    def scaled(self, a):
        return Poly2(a * self.c)

    def times_y(self):
        return Poly2(np.pad(self.c, ((0, 0), (1, 0))))


def _random_poly(rng, degree, scale=1.0):
    c = np.zeros((degree + 1, degree + 1))
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            c[i, j] = scale * rng.uniform(-1, 1)
    return Poly2(c)


class PolynomialFields:
    """Polynomial manufactured pair reproduced exactly by the scheme.

    Solid: ``d = w A(t)`` with ``A' = a`` linear, ``sigma_s = S0 + C_s eps(w) A``.
    Fluid: ``u_f = w a(t) + e q(t)`` with ``q`` quadratic and
    ``sigma_f = C_f eps(u_f)``. Here ``w = curl(psi)`` and
    ``e = curl(y^2 phi) + y r / lam_f`` vanishes on y = 0, so the velocity is
    continuous across the interface. The ``1 / lam_f`` scaling keeps the
    fluid pressure ``-lam_f div u_f`` of unit size. Velocity has degree
    k + 1, stress degree k, and every field is at most quadratic in time.
    """

    def __init__(self, k, mat, seed=1234, scale=1.0):
        rng = np.random.default_rng(seed + k)
        self.k = k
        self.mat = mat
        psi = _random_poly(rng, k + 2, scale)
        self.w = [psi.dy(), psi.dx().scaled(-1.0)]
        big = _random_poly(rng, k, scale).times_y().times_y()
        r = [_random_poly(rng, k, scale).times_y() for _ in range(2)]
        inv = 1.0 / mat.lam_f
        self.yz = [
            Poly2(_padd(big.dy().c, inv * r[0].c)),
            Poly2(_padd(-big.dx().c, inv * r[1].c)),
        ]
        self.s0 = [_random_poly(rng, k, scale) for _ in range(3)]
        self.a0, self.a1 = rng.uniform(-1, 1, 2) * scale
        self.q = rng.uniform(-1, 1, 3) * scale

    # time profiles
    def a(self, t):
        return self.a0 + self.a1 * t

    def A(self, t):
        return self.a0 * t + 0.5 * self.a1 * t**2

    def qt(self, t):
        return self.q[0] + self.q[1] * t + self.q[2] * t**2

    def dqt(self, t):
        return self.q[1] + 2 * self.q[2] * t

    @staticmethod
    def _eps(polys, x, y):
        g = [[polys[i].dx()(x, y), polys[i].dy()(x, y)] for i in range(2)]
        return g[0][0], g[1][1], 0.5 * (g[0][1] + g[1][0])

    def _cf(self, mu, lam, e11, e22, e12):
        tr = e11 + e22
        return 2 * mu * e11 + lam * tr, 2 * mu * e22 + lam * tr, 2 * mu * e12

    def _div(self, polys3, x, y, coef):
        # div of a tensor field given as compact polynomials times coef
        s11, s22, s12 = polys3
        return np.stack([s11.dx()(x, y) + s12.dy()(x, y), s12.dx()(x, y) + s22.dy()(x, y)]) * coef

    def w_val(self, x, y):
        return np.stack([self.w[0](x, y), self.w[1](x, y)])

    def yz_val(self, x, y):
        return np.stack([self.yz[0](x, y), self.yz[1](x, y)])

    def u_f(self, x, y, t):
        return self.w_val(x, y) * self.a(t) + self.yz_val(x, y) * self.qt(t)

    def u_s(self, x, y, t):
        return self.w_val(x, y) * self.a(t)

    def d(self, x, y, t):
        return self.w_val(x, y) * self.A(t)

    def grad_u_f(self, x, y, t):
        g = np.empty((2, 2) + np.shape(x))
        for i in range(2):
            g[i, 0] = self.w[i].dx()(x, y) * self.a(t) + self.yz[i].dx()(x, y) * self.qt(t)
            g[i, 1] = self.w[i].dy()(x, y) * self.a(t) + self.yz[i].dy()(x, y) * self.qt(t)
        return g

    def _compact_poly_cf(self, polys, mu, lam):
        # C eps(p) as compact polynomial triple
        e11 = polys[0].dx().c
        e22 = polys[1].dy().c
        e12 = 0.5 * _padd(polys[0].dy().c, polys[1].dx().c)
        tr = _padd(e11, e22)
        return (
            Poly2(_padd(2 * mu * e11, lam * tr)),
            Poly2(_padd(2 * mu * e22, lam * tr)),
            Poly2(2 * mu * e12),
        )

    def sigma_f(self, x, y, t):
        mu, lam = self.mat.mu_f, self.mat.lam_f
        cw = self._compact_poly_cf(self.w, mu, lam)
        cz = self._compact_poly_cf(self.yz, mu, lam)
        c = [cw[i](x, y) * self.a(t) + cz[i](x, y) * self.qt(t) for i in range(3)]
        return _tensor(*c)

    def sigma_s(self, x, y, t):
        mu, lam = self.mat.mu_s, self.mat.lam_s
        cw = self._compact_poly_cf(self.w, mu, lam)
        c = [self.s0[i](x, y) + cw[i](x, y) * self.A(t) for i in range(3)]
        return _tensor(*c)

    def F_f(self, x, y, t):
        mu, lam = self.mat.mu_f, self.mat.lam_f
        du = self.w_val(x, y) * self.a1 + self.yz_val(x, y) * self.dqt(t)
        div = self._div(self._compact_poly_cf(self.w, mu, lam), x, y, self.a(t)) + self._div(
            self._compact_poly_cf(self.yz, mu, lam), x, y, self.qt(t)
        )
        return self.mat.rho_f * du - div

    def F_s(self, x, y, t):
        mu, lam = self.mat.mu_s, self.mat.lam_s
        du = self.w_val(x, y) * self.a1
        div = self._div(self.s0, x, y, 1.0) + self._div(self._compact_poly_cf(self.w, mu, lam), x, y, self.A(t))
        return self.mat.rho_s * du - div

    def jump(self, x, y, t):
        return self.sigma_f(x, y, t)[:, 1] - self.sigma_s(x, y, t)[:, 1]

    def pressure(self, x, y, t):
        e = self.grad_u_f(x, y, t)
        return -self.mat.lam_f * (e[0, 0] + e[1, 1])

    def exact(self):
        stress = Piecewise(self.sigma_f, self.sigma_s)
        return ExactSolution(
            velocity=Piecewise(self.u_f, self.u_s),
            stress=stress,
            stress_penalty=stress,
            pressure=self.pressure,
            displacement=self.d,
            source=Piecewise(self.F_f, self.F_s),
            interface_jump=self.jump,
        )


def _padd(a, b):
    n = max(a.shape[0], b.shape[0])
    m = max(a.shape[1], b.shape[1])
    out = np.zeros((n, m))
    out[: a.shape[0], : a.shape[1]] += a
    out[: b.shape[0], : b.shape[1]] += b
    return out


def polynomial_exactness_case(k, materials=L1, seed=1234, scale=1.0):
    """Polynomial-in-space, quadratic-in-time pair on the Example 1 geometry.

    ``scale=0`` gives the zero solution.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    fields = PolynomialFields(k, materials, seed=seed, scale=scale)
    ex = fields.exact()

    def bc_f(x, y, t):
        return fields.u_f(x, y, t)

    def bc_s(x, y, t):
        return fields.u_s(x, y, t)

    return Problem(
        name="exactness",
        materials=materials,
        make_mesh=example1_mesh,
        bcs={"gamma_f": dirichlet(bc_f), "gamma_s": dirichlet(bc_s)},
        source=ex.source,
        interface_jump=ex.interface_jump,
        u0=Piecewise(lambda x, y: fields.u_f(x, y, 0.0), lambda x, y: fields.u_s(x, y, 0.0)),
        grad_u0=lambda x, y: fields.grad_u_f(x, y, 0.0),
        sigma0=Piecewise(lambda x, y: fields.sigma_f(x, y, 0.0), lambda x, y: fields.sigma_s(x, y, 0.0)),
        d0=lambda x, y: fields.d(x, y, 0.0),
        exact=ex,
        T=0.5,
        extras={"fields": fields},
    )


# -- Example 2 -------------------------------------------------------------


@dataclass(frozen=True)
class PulseSpec:
    p_max: float = 1.333e4
    t_max: float = 0.003

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        val = 0.5 * self.p_max * (1.0 - np.cos(2.0 * PI * t / self.t_max))
        return np.where((t >= 0) & (t <= self.t_max), val, 0.0)


CHANNEL = dict(length=6.0, fluid_height=0.5, wall_top=0.6)


def example2_mesh(h=0.1):
    """Channel (0,6)x(0,0.5) with wall (0,6)x(0.5,0.6), structured, labelled."""
    L, yf, ys = CHANNEL["length"], CHANNEL["fluid_height"], CHANNEL["wall_top"]
    nx = int(round(L / h))
    ny = int(round(ys / h))
    if abs(nx * h - L) > 1e-9 or abs(ny * h - ys) > 1e-9 or abs(yf / h - round(yf / h)) > 1e-9:
        raise ValueError(f"h = {h} does not divide the channel geometry")
    mesh = generate_structured((0.0, L, 0.0, ys), nx, ny, split_y=yf)
    tol = 1e-9 * L
    preds = {
        "gamma_f_in": lambda x, y: (np.abs(x) < tol) & (y < yf),
        "gamma_s_in": lambda x, y: (np.abs(x) < tol) & (y > yf),
        "gamma_f_out": lambda x, y: (np.abs(x - L) < tol) & (y < yf),
        "gamma_s_out": lambda x, y: (np.abs(x - L) < tol) & (y > yf),
        "gamma_f_bot": lambda x, y: np.abs(y) < tol,
        "gamma_s_top": lambda x, y: np.abs(y - ys) < tol,
    }
    return classify_facets(mesh, preds)


def example2(lam_f=1e6, p_max=1.333e4, t_max=0.003):
    """Pressure-pulse driven channel with a thick elastic wall and spring term."""
    mat = BLOOD.with_(lam_f=lam_f)
    pulse = PulseSpec(p_max=p_max, t_max=t_max)

    def inlet(x, y, t):
        return np.full(np.shape(x), -float(pulse(t)))

    zero_u = lambda x, y: _zeros2(x)  # noqa: E731
    bcs = {
        "gamma_f_in": normal_stress(inlet),
        "gamma_f_out": normal_stress(),
        "gamma_s_top": normal_stress(),
        "gamma_f_bot": tangential_stress(),
        "gamma_s_in": dirichlet(),
        "gamma_s_out": dirichlet(),
    }
    return Problem(
        name="example2",
        materials=mat,
        make_mesh=example2_mesh,
        bcs=bcs,
        u0=zero_u,
        grad_u0=lambda x, y: np.zeros((2, 2) + np.shape(x)),
        sigma0=lambda x, y: np.zeros((2, 2) + np.shape(x)),
        d0=zero_u,
        T=0.012,
        extras={"pulse": pulse},
    )


def probe_points(n=601, y=0.0):
    x = np.linspace(0.0, CHANNEL["length"], n)
    return np.column_stack([x, np.full(n, y)])


def probes(state, mesh, k, materials, n=601):
    """Example 2 line probes at the current state.

    Returns a dict of (x, value) arrays: ``flow`` (2/3 of u_x on y = 0),
    ``pressure`` (postprocessed on y = 0) and ``displacement`` (d_y on the
    interface, solid side).
    """
    bot = probe_points(n, 0.0)
    sig = probe_points(n, CHANNEL["fluid_height"])
    eb = locate(mesh, bot, prefer_solid=False)
    es = locate(mesh, sig, prefer_solid=True)
    ux = eval_at_points(state.u[:, 0], k + 1, mesh, eb, bot)
    fl = np.flatnonzero(~mesh.solid)
    pcoef = np.zeros((mesh.n_elements, state.sigma.shape[-1]))
    pcoef[fl] = postprocess_pressure(state.sigma, mesh, materials, fl)
    p = eval_at_points(pcoef, k, mesh, eb, bot)
    dy = eval_at_points(state.d[:, 1], k + 1, mesh, es, sig)
    return {
        "flow": (bot[:, 0], 2.0 / 3.0 * ux),
        "pressure": (bot[:, 0], p),
        "displacement": (sig[:, 0], dy),
    }


PROBLEMS = {
    "example1_L1": lambda **kw: example1("L1", **kw),
    "example1_L2": lambda **kw: example1("L2", **kw),
    "example2": example2,
}
