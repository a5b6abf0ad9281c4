"""Crank-Nicolson stepping, initialisation and energy accounting.

Each step solves for the time means ``Y = (X^{n+1} + X^n) / 2`` of all
unknowns and then sets ``X^{n+1} = 2 Y - X^n``. Sources, loads and
constrained trace data enter as the average of their values at ``t_n`` and
``t_{n+1}``. With ``beta_s > 0`` a solid displacement ``d`` is carried along,
``d^{n+1} = d^n + dt * mean(u)``, and the spring force acts on the mean
displacement ``d^n + dt/2 * mean(u)``.

A ``problem`` is any object with the attributes of
:class:`hdgfsi.benchmarks.Problem`.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import assembly
from .assembly import BoundaryData, DofMap, assemble_local, cn_matrices, local_matrices
from .basis import (
    Piecewise,
    dim_p,
    edge_basis,
    element_points,
    evaluate_on,
    facet_points,
    project_elements,
    triangle_basis,
)
from .materials import apply_Cf, to_compact
from .parallel import batched_matvec
from .quadrature import quad_edge, quad_triangle
from .sparse import DirectSolver, csr_from_triplets

RESIDUAL_TOL = 1e-10


class InitializationError(ValueError):
    pass


class ResidualError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True, eq=False)
class State:
    """Snapshot of the discrete unknowns at time ``t`` (step ``n``).

    sigma (nE, 3, dim P_k), u (nE, 2, dim P_{k+1}), trace (n_full,) in the
    facet frames of the dof map, d (nE, 2, dim P_{k+1}) (zero on fluid
    elements).
    """

    n: int
    t: float
    sigma: np.ndarray
    u: np.ndarray
    trace: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        for name in ("sigma", "u", "trace", "d"):
            getattr(self, name).flags.writeable = False

    def interior(self):
        ne = self.sigma.shape[0]
        return np.concatenate([self.sigma.reshape(ne, -1), self.u.reshape(ne, -1)], axis=1)


@dataclass
class StepInfo:
    """Per-step diagnostics passed to observers alongside the new state."""

    energy_before: float
    energy_after: float
    dissipation: float
    residual: float


@dataclass
class EnergyReport:
    n: list = field(default_factory=list)
    t: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    dissipation: list = field(default_factory=list)

    def __call__(self, state, info):
        if not self.n:
            self.n.append(state.n - 1)
            self.t.append(np.nan)
            self.energy.append(info.energy_before)
            self.dissipation.append(0.0)
        self.n.append(state.n)
        self.t.append(state.t)
        self.energy.append(info.energy_after)
        self.dissipation.append(info.dissipation)

    def cumulative_check(self):
        """E^n + sum_{m<n} D^m - E^0 for every recorded n."""
        e = np.asarray(self.energy)
        return e + np.cumsum(self.dissipation) - e[0]

    def relative_balance(self):
        e0 = self.energy[0]
        c = self.cumulative_check()
        return float(np.max(np.abs(c)) / e0) if e0 > 0 else float(np.max(np.abs(c)))

    def write_csv(self, path, t0=0.0):
        chk = self.cumulative_check()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "t", "E", "D", "E_cumulative_check"])
            for i, n in enumerate(self.n):
                t = t0 if i == 0 else self.t[i]
                w.writerow([n, repr(float(t)), repr(self.energy[i]), repr(self.dissipation[i]), repr(float(chk[i]))])


def _facet_values(f, mesh, facets, pts, *args):
    """Evaluate a (possibly piecewise) field at facet points using the owner side."""
    if not isinstance(f, Piecewise):
        return np.asarray(f(pts[..., 0], pts[..., 1], *args), dtype=float)
    owner = mesh.facet_elems[facets, 0]
    solid = mesh.solid[owner]
    out = None
    for flag in (False, True):
        sel = np.flatnonzero(solid == flag)
        if sel.size:
            v = np.asarray(f(pts[sel, :, 0], pts[sel, :, 1], *args, solid=flag), dtype=float)
            if out is None:
                out = np.empty(v.shape[:-2] + pts.shape[:-1])
            out[..., sel, :] = v
    return out


def project_trace(f, dofmap, t=None, quad_degree=None):
    """Per-facet L2 projection of a vector field into the trace frames (full numbering)."""
    mesh = dofmap.mesh
    rule = quad_edge(quad_degree if quad_degree is not None else 2 * dofmap.k + 8)
    psi = edge_basis(dofmap.k + 1).values(rule.points)
    pts = facet_points(mesh, rule)
    args = () if t is None else (t,)
    v = _facet_values(f, mesh, np.arange(mesh.n_facets), pts, *args)  # (2, nf, nq)
    vf = np.einsum("afq,fac->fcq", v, dofmap.frames)
    return np.einsum("fcq,q,qm->fcm", vf, rule.weights, psi).ravel()


class CrankNicolson:
    """Factorised Crank-Nicolson integrator for one (mesh, k, dt, materials).

    Parameters
    ----------
    problem : Problem
        Materials, boundary conditions, data fields.
    mesh : Mesh
    k : int
        Stress degree; velocity and trace use k + 1.
    dt : float
    solver : {"direct", "iterative"}
    monolithic : bool
        Solve the uncondensed system (testing oracle) instead of condensing.
    check_residual : bool
        Evaluate the uncondensed residual after every step and raise
        :class:`ResidualError` above ``RESIDUAL_TOL``.
    """

    def __init__(self, problem, mesh, k, dt, solver="direct", tol=1e-10, monolithic=False,
                 check_residual=True, quad_degree=None):
        if not dt > 0:
            raise ValueError(f"time step must be positive, got {dt}")
        self.problem = problem
        self.mesh = mesh
        self.k = k
        self.dt = float(dt)
        self.mat = problem.materials
        self.dofmap = DofMap(mesh, k, problem.bcs)
        self.bdata = BoundaryData(self.dofmap, problem.interface_jump)
        self.blocks = assemble_local(mesh, k, self.mat, self.dofmap)
        self.k_loc = cn_matrices(self.blocks, mesh, self.mat, self.dt)
        self.abs_k = np.abs(self.k_loc)
        cls = assembly.MonolithicSystem if monolithic else assembly.CondensedSystem
        self.system = cls(self.k_loc, self.dofmap, solver=solver, tol=tol)
        self.check_residual = check_residual
        self.quad_degree = quad_degree if quad_degree is not None else 2 * k + 8
        self.nk = dim_p(k)
        self.nv = dim_p(k + 1)
        self._cache = {}
        self._src = None

    # -- data at a time level ------------------------------------------------

    def _source(self, t):
        f = self.problem.source
        if f is None:
            return None
        key = ("F", t)
        if key not in self._cache:
            if self._src is None:
                rule = quad_triangle(2 * self.k + 6)
                pts = element_points(self.mesh, rule)
                wphi = rule.weights[:, None] * triangle_basis(self.k + 1).values(rule.points)
                self._src = (pts, wphi)
            pts, wphi = self._src
            val = evaluate_on(f, pts[..., 0], pts[..., 1], self.mesh.solid, t)
            # int_K F . chi_j = detJ sum_q w_q F(x_q) chi_j(xi_q)
            self._cache[key] = np.einsum("ceq,qj,e->ecj", val, wphi, self.mesh.det_jacobian)
        return self._cache[key]

    def _bc(self, t):
        key = ("bc", t)
        if key not in self._cache:
            self._cache[key] = (self.bdata.loads(t), self.bdata.values(t))
        return self._cache[key]

    # -- energy ----------------------------------------------------------------

    def energy(self, state):
        """E = 1/2 |rho^1/2 u|^2 + 1/2 |A_s^1/2 sigma|^2_s (+ 1/2 beta_s |d|^2)."""
        b = self.blocks
        s = self.mesh.solid
        e = 0.5 * np.sum(b.mass_u[:, None, None] * state.u**2)
        sig = state.sigma.reshape(len(s), -1)[s]
        e += 0.5 * np.einsum("ei,eij,ej->", sig, b.mass_sigma[s], sig)
        if self.mat.beta_s > 0:
            e += 0.5 * self.mat.beta_s * np.sum(b.det[s, None, None] * state.d[s] ** 2)
        return float(e)

    def dissipation(self, mean_sigma, mean_u, mean_trace):
        """dt (|A_f^1/2 sigma|^2_f + sum_F tau_F |u - u_hat|^2_dK) for mean values."""
        b = self.blocks
        f = ~self.mesh.solid
        ne = len(f)
        sig = mean_sigma.reshape(ne, -1)[f]
        val = np.einsum("ei,eij,ej->", sig, b.mass_sigma[f], sig)
        u = mean_u.reshape(ne, -1)
        lam = mean_trace[self.dofmap.elem_trace_full]
        val += np.einsum("ei,eij,ej->", u, b.stab_uu, u)
        val += 2.0 * np.einsum("ei,eij,ej->", u, b.stab_ut, lam)
        val += np.einsum("ei,ei,ei->", lam, b.stab_tt, lam)
        return float(self.dt * val)

    # -- stepping --------------------------------------------------------------

    def step(self, state):
        """Advance ``state`` by one step; returns ``(new_state, StepInfo)``."""
        dt = self.dt
        t0, t1 = state.t, state.t + dt
        mesh = self.mesh
        ne = mesh.n_elements
        ns = 3 * self.nk
        s = mesh.solid
        x0 = state.interior()
        r = np.zeros_like(x0)
        b = self.blocks
        r[s, :ns] = (2.0 / dt) * batched_matvec(b.mass_sigma[s], x0[s, :ns])
        r[:, ns:] = (2.0 / dt) * b.mass_u[:, None] * x0[:, ns:]
        f0, f1 = self._source(t0), self._source(t1)
        if f0 is not None:
            r[:, ns:] += 0.5 * (f0 + f1).reshape(ne, -1)
        if self.mat.beta_s > 0:
            r[s, ns:] -= self.mat.beta_s * b.det[s, None] * state.d[s].reshape(int(s.sum()), -1)
        self._cache = {kk: v for kk, v in self._cache.items() if kk[1] in (t0, t1)}
        g0, v0 = self._bc(t0)
        g1, v1 = self._bc(t1)
        g = 0.5 * (g0 + g1)
        lam_c = 0.5 * (v0 + v1)
        y, lam = self.system.solve(r, g, lam_c)
        res = np.nan
        if self.check_residual:
            res = assembly.uncondensed_residual(self.k_loc, self.dofmap, y, lam, r, g, self.abs_k)
            if not res <= RESIDUAL_TOL:
                raise ResidualError(
                    f"step {state.n + 1}: uncondensed residual {res:.3e} exceeds {RESIDUAL_TOL:.0e}", res
                )
        x1 = 2.0 * y - x0
        trace1 = 2.0 * lam - state.trace
        trace1[self.dofmap.constrained_dofs] = v1[self.dofmap.constrained_dofs]
        mean_u = y[:, ns:].reshape(ne, 2, self.nv)
        d1 = state.d
        if self.mat.beta_s > 0:
            d1 = state.d + dt * mean_u * s[:, None, None]
        new = State(
            n=state.n + 1,
            t=t1,
            sigma=x1[:, :ns].reshape(ne, 3, self.nk),
            u=x1[:, ns:].reshape(ne, 2, self.nv),
            trace=trace1,
            d=np.array(d1),
        )
        info = StepInfo(
            energy_before=self.energy(state),
            energy_after=self.energy(new),
            dissipation=self.dissipation(y[:, :ns], y[:, ns:], lam),
            residual=res,
        )
        return new, info

    def run(self, state, steps, observers=()):
        """Take ``steps`` steps from ``state``; observers get ``(state, info)`` each step."""
        if steps < 1:
            raise ValueError("number of steps must be >= 1")
        for _ in range(steps):
            state, info = self.step(state)
            for obs in observers:
                obs(state, info)
        return state

    # -- initial data ----------------------------------------------------------

    def zero_state(self, t=0.0):
        ne = self.mesh.n_elements
        return State(
            n=0,
            t=float(t),
            sigma=np.zeros((ne, 3, self.nk)),
            u=np.zeros((ne, 2, self.nv)),
            trace=np.zeros(self.dofmap.n_full),
            d=np.zeros((ne, 2, self.nv)),
        )

    def initialize(self, mode="consistent", t=0.0):
        """Initial state from the problem's initial data.

        Velocity and solid stress are L2 projections of ``u0`` and ``sigma0``;
        the solid displacement projects ``d0``. The fluid stress and the trace
        are either solved from the algebraic part of the semi-discrete system
        (``consistent``) or set to the projections of ``C_f eps(u0)`` and of
        the trace of ``u0`` (``projected``).
        """
        if mode not in ("consistent", "projected"):
            raise InitializationError(f"unknown initialisation mode {mode!r}")
        p = self.problem
        mesh = self.mesh
        ne = mesh.n_elements
        s = mesh.solid
        qd = self.quad_degree
        u = np.zeros((ne, 2, self.nv))
        sigma = np.zeros((ne, 3, self.nk))
        d = np.zeros((ne, 2, self.nv))
        if p.u0 is not None:
            u = project_elements(p.u0, mesh, self.k + 1, qd)
        if p.sigma0 is not None and s.any():
            v = project_elements(p.sigma0, mesh, self.k, qd, elements=np.flatnonzero(s))
            sigma[s] = _compact_coeffs(v)
        if p.d0 is not None and s.any():
            d[s] = project_elements(p.d0, mesh, self.k + 1, qd, elements=np.flatnonzero(s))
        values = self.bdata.values(t)
        if mode == "projected":
            if (~s).any():
                if p.u0 is not None and p.grad_u0 is None:
                    raise InitializationError("projected initialisation needs the gradient of u0")
                if p.grad_u0 is not None:
                    mat = self.mat

                    def cf_eps(x, y):
                        g = np.asarray(p.grad_u0(x, y), dtype=float)
                        eps = 0.5 * (g + np.swapaxes(g, 0, 1))
                        c = apply_Cf(to_compact(eps), mat)
                        return np.stack([np.stack([c[..., 0], c[..., 2]]), np.stack([c[..., 2], c[..., 1]])])

                    fl = np.flatnonzero(~s)
                    sigma[fl] = _compact_coeffs(project_elements(cf_eps, mesh, self.k, qd, elements=fl))
            trace = project_trace(p.u0, self.dofmap) if p.u0 is not None else np.zeros(self.dofmap.n_full)
            trace[self.dofmap.constrained_dofs] = values[self.dofmap.constrained_dofs]
        else:
            sigma, trace = self._consistent(sigma, u, values, t)
        return State(n=0, t=float(t), sigma=sigma, u=u, trace=trace, d=d)

    def _consistent(self, sigma, u, values, t):
        """Solve the stress-test rows on fluid elements and the trace rows at time t."""
        mesh = self.mesh
        dm = self.dofmap
        ne = mesh.n_elements
        ns = 3 * self.nk
        k0 = local_matrices(self.blocks, mesh.solid, 0.0, 1.0, 0.0)
        fluid = ~mesh.solid
        nfl = int(fluid.sum())
        # unknown numbering: fluid stresses then free traces
        sig_idx = np.full((ne, ns), -1, dtype=np.int64)
        sig_idx[fluid] = np.arange(nfl * ns).reshape(nfl, ns)
        tr_idx = np.where(dm.elem_trace >= 0, dm.elem_trace + nfl * ns, -1)
        unk = np.concatenate([sig_idx, np.full((ne, self.dofmap.n_u), -1), tr_idx], axis=1)
        n = nfl * ns + dm.n_free
        lam_c = values.copy()
        lam_c[dm.free_dofs] = 0.0
        known = np.concatenate(
            [sigma.reshape(ne, -1) * mesh.solid[:, None], u.reshape(ne, -1), lam_c[dm.elem_trace_full]], axis=1
        )
        rhs_loc = -batched_matvec(k0, known)
        rows = np.broadcast_to(unk[:, :, None], k0.shape)
        cols = np.broadcast_to(unk[:, None, :], k0.shape)
        keep = (rows >= 0) & (cols >= 0)
        a = csr_from_triplets(rows[keep], cols[keep], k0[keep], (n, n))
        sel = unk >= 0
        rhs = np.bincount(unk[sel], weights=rhs_loc[sel], minlength=n)
        rhs[nfl * ns:] += self.bdata.loads(t)[dm.free_dofs]
        sol = DirectSolver(a).solve(rhs)
        sigma = sigma.copy()
        sigma[fluid] = sol[: nfl * ns].reshape(nfl, 3, self.nk)
        trace = lam_c
        trace[dm.free_dofs] = sol[nfl * ns:]
        return sigma, trace


def _compact_coeffs(c):
    # (ne, 4, n) row-major tensor projection -> (ne, 3, n) compact
    return np.stack([c[:, 0], c[:, 3], 0.5 * (c[:, 1] + c[:, 2])], axis=1)


def steps_for(T, dt):
    """Number of uniform steps ``L = ceil(T / dt)`` (to round-off)."""
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    return max(1, int(np.ceil(T / dt - 1e-9)))


def simulate(problem, mesh, k, T, steps, mode="consistent", observers=(), **kwargs):
    """Initialise and run ``steps`` uniform steps to time ``T``; returns the final state."""
    integ = CrankNicolson(problem, mesh, k, T / steps, **kwargs)
    state = integ.initialize(mode)
    return integ.run(state, steps, observers), integ
