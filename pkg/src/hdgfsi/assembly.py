"""Element-local HDG forms, boundary conditions and static condensation.

Unknowns per element K are the stress sigma in P_k(K, S) (three compact
components), the velocity u in P_{k+1}(K, R^2) and, per facet, the trace
u_hat in P_{k+1}(F, R^2). Element-local dof order is

    [sigma_11 | sigma_22 | sigma_12 | u_1 | u_2 | trace(edge 0) | ... (edge 2)]

with each trace block ordered (component, edge-basis index). Trace
components are taken in a per-facet orthonormal frame: Cartesian by
default, (normal, tangent) on facets carrying a mixed condition so that the
constraint acts on a single component.

The bilinear form realised per element (test functions tau, v, v_hat) is

    B_h(sigma, v) - B_h(tau, u) + <(k+1)^2/h_F [u], [v]>
    B_h(tau, v)  = (tau, eps(v))_K - <tau n, v - v_hat>_dK

plus weighted stress/velocity masses supplied by the caller.
"""

from dataclasses import dataclass

import numpy as np

from . import hooks
from .basis import (
    dim_p,
    edge_basis,
    facet_points,
    to_reference,
    triangle_basis,
)
from .materials import element_compliance
from .parallel import batched_matvec
from .mesh import INTERFACE
from .quadrature import quad_edge, quad_triangle
from .sparse import DirectSolver, IterativeSolver, SingularMatrixError, csr_from_triplets


class BoundaryConditionError(ValueError):
    pass


# -- boundary condition specs ----------------------------------------------


@dataclass(frozen=True)
class BoundaryCondition:
    """One condition per labelled boundary part.

    ``kind`` is one of ``dirichlet`` (velocity vector), ``traction`` (sigma n
    vector), ``normal_stress`` ((sigma n).n scalar plus tangential velocity)
    or ``tangential_stress`` (tangential traction plus normal velocity).
    Data callables take ``(x, y, t)``; ``None`` means zero.
    """

    kind: str
    stress: object = None
    velocity: object = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "traction", "normal_stress", "tangential_stress"):
            raise BoundaryConditionError(f"unknown boundary condition kind {self.kind!r}")


def dirichlet(velocity=None):
    return BoundaryCondition("dirichlet", velocity=velocity)


def traction(stress=None):
    return BoundaryCondition("traction", stress=stress)


def normal_stress(stress=None, tangential_velocity=None):
    return BoundaryCondition("normal_stress", stress=stress, velocity=tangential_velocity)


def tangential_stress(stress=None, normal_velocity=None):
    return BoundaryCondition("tangential_stress", stress=stress, velocity=normal_velocity)


def stabilization_weight(k, h_f):
    """HDG stabilisation (k+1)^2 / h_F."""
    h_f = np.asarray(h_f, dtype=float)
    if np.any(h_f <= 0):
        raise ValueError("facet size must be positive")
    return (k + 1) ** 2 / h_f


# -- dof map -----------------------------------------------------------------


class DofMap:
    """Numbering of element-interior and facet-trace unknowns.

    Trace dofs have a *full* numbering ``(facet * 2 + comp) * ne + j`` covering
    every facet, and a *free* numbering over the unconstrained ones used by
    the global system (``-1`` marks constrained dofs).
    """

    def __init__(self, mesh, k, bcs):
        if k < 0:
            raise ValueError("k must be >= 0")
        self.mesh = mesh
        self.k = k
        self.nk = dim_p(k)
        self.nv = dim_p(k + 1)
        self.ne = k + 2
        self.n_sigma = 3 * self.nk
        self.n_u = 2 * self.nv
        self.n_interior = self.n_sigma + self.n_u
        self.n_trace_local = 6 * self.ne
        nf = mesh.n_facets
        self.frames = np.tile(np.eye(2), (nf, 1, 1))
        self.constrained = np.zeros((nf, 2), dtype=bool)
        self.bcs = dict(bcs)
        self.bc_facets = {}
        self._apply(mesh)
        full = np.arange(nf * 2 * self.ne).reshape(nf, 2, self.ne)
        mask = np.repeat(self.constrained[:, :, None], self.ne, axis=2)
        free = np.full(full.shape, -1, dtype=np.int64)
        free[~mask] = np.arange(int((~mask).sum()))
        self.n_full = full.size
        self.free_index = free.ravel()
        self.n_free = int((~mask).sum())
        self.free_dofs = np.flatnonzero(self.free_index >= 0)
        self.constrained_dofs = np.flatnonzero(self.free_index < 0)
        ef = mesh.elem_facets
        self.elem_trace_full = (
            (ef[:, :, None, None] * 2 + np.arange(2)[None, None, :, None]) * self.ne
            + np.arange(self.ne)[None, None, None, :]
        ).reshape(mesh.n_elements, -1)
        self.elem_trace = self.free_index[self.elem_trace_full]

    def _apply(self, mesh):
        if INTERFACE in self.bcs:
            raise BoundaryConditionError("interface facets must not carry a boundary condition")
        covered = np.zeros(mesh.n_facets, dtype=bool)
        for name, bc in self.bcs.items():
            if name not in mesh.labels:
                raise BoundaryConditionError(f"boundary condition for unknown label {name!r}")
            ids = mesh.labels[name]
            if np.any(~np.isin(ids, mesh.boundary_facets)):
                raise BoundaryConditionError(f"label {name!r} contains non-boundary facets")
            if np.any(covered[ids]):
                raise BoundaryConditionError(f"label {name!r} overlaps another labelled part")
            covered[ids] = True
            self.bc_facets[name] = ids
            n = mesh.facet_normals[ids]
            t = np.column_stack([-n[:, 1], n[:, 0]])
            if bc.kind == "dirichlet":
                self.constrained[ids] = True
            elif bc.kind in ("normal_stress", "tangential_stress"):
                self.frames[ids] = np.stack([n, t], axis=-1)
                comp = 1 if bc.kind == "normal_stress" else 0
                self.constrained[ids, comp] = True
        missing = mesh.boundary_facets[~covered[mesh.boundary_facets]]
        if missing.size:
            pts = ", ".join(f"({x:.6g}, {y:.6g})" for x, y in mesh.facet_midpoints[missing[:8]])
            raise BoundaryConditionError(
                f"{missing.size} boundary facets without a boundary condition, e.g. at {pts}"
            )

    @property
    def n_local(self):
        return self.n_interior + self.n_trace_local


# -- local blocks ------------------------------------------------------------


@dataclass
class LocalBlocks:
    """Material- and time-step-independent pieces of the element matrices.

    Shapes (ne = number of elements, ns = 3 dim P_k, nu = 2 dim P_{k+1},
    nt = local trace dofs):

    mass_u     (ne,)         rho detJ; velocity mass is mass_u * I
    mass_sigma (ne, ns, ns)  (A sigma, tau)_K with A_s or A_f per element
    coupling   (ne, nu, ns)  (sigma, eps(v))_K - <sigma n, v>_dK
    trace      (ne, nt, ns)  <sigma n, v_hat>_dK
    stab_uu    (ne, nu, nu)  <tau_F u, v>_dK
    stab_ut    (ne, nu, nt)  -<tau_F u_hat, v>_dK
    stab_tt    (ne, nt)      tau_F h_F (diagonal)
    """

    mass_u: np.ndarray
    mass_sigma: np.ndarray
    coupling: np.ndarray
    trace: np.ndarray
    stab_uu: np.ndarray
    stab_ut: np.ndarray
    stab_tt: np.ndarray
    det: np.ndarray


def _edge_tables(mesh, k, rule):
    """Element bases at facet quadrature points, per element and local edge."""
    ne_el = mesh.n_elements
    pts = facet_points(mesh, rule)[mesh.elem_facets]  # (nE, 3, nq, 2)
    els = np.repeat(np.arange(ne_el), 3)
    ref = to_reference(mesh, els, pts.reshape(3 * ne_el, -1, 2)).reshape(ne_el, 3, -1, 2)
    phi = triangle_basis(k).values(ref.reshape(-1, 2)).reshape(ne_el, 3, len(rule), -1)
    chi = triangle_basis(k + 1).values(ref.reshape(-1, 2)).reshape(ne_el, 3, len(rule), -1)
    return phi, chi


def assemble_local(mesh, k, mat, dofmap=None, facet_degree=None):
    """Compute :class:`LocalBlocks` for every element."""
    nk, nv, ne = dim_p(k), dim_p(k + 1), k + 2
    nE = mesh.n_elements
    frames = dofmap.frames if dofmap is not None else np.tile(np.eye(2), (mesh.n_facets, 1, 1))
    det = mesh.det_jacobian
    jinv = mesh.inv_jacobian

    # volume terms
    vrule = quad_triangle(2 * k + 2)
    phi_v = triangle_basis(k).values(vrule.points)
    dchi = triangle_basis(k + 1).gradients(vrule.points)  # (nq, nv, 2)
    ref_d = np.einsum("q,qi,qjb->bij", vrule.weights, phi_v, dchi)  # (2, nk, nv)
    # physical d/dx_a = sum_b Jinv[b, a] d/dxi_b
    dphys = np.einsum("e,eba,bij->eaij", det, jinv, ref_d)  # (nE, 2, nk, nv)
    dx, dy = dphys[:, 0], dphys[:, 1]

    # facet terms
    frule = quad_edge(facet_degree if facet_degree is not None else 2 * (k + 2))
    phi_f, chi_f = _edge_tables(mesh, k, frule)
    psi = edge_basis(k + 1).values(frule.points)  # (nq, ne)
    hf = mesh.facet_lengths[mesh.elem_facets]  # (nE, 3)
    w = frule.weights
    e_sv = np.einsum("q,elqi,elqj->elij", w, phi_f, chi_f) * hf[..., None, None]
    f_st = np.einsum("q,elqi,qm->elim", w, phi_f, psi) * hf[..., None, None]
    g_uu = np.einsum("q,elqi,elqj->elij", w, chi_f, chi_f) * hf[..., None, None]
    h_ut = np.einsum("q,elqj,qm->eljm", w, chi_f, psi) * hf[..., None, None]
    nrm = mesh.element_normals()  # (nE, 3, 2)
    n1 = nrm[..., 0][..., None, None]
    n2 = nrm[..., 1][..., None, None]
    tau = stabilization_weight(k, hf) * hooks.get("stab_sign")  # (nE, 3)

    s11, s22, s12 = (slice(c * nk, (c + 1) * nk) for c in range(3))
    v1, v2 = slice(0, nv), slice(nv, 2 * nv)

    coupling = np.zeros((nE, 2 * nv, 3 * nk))
    t = lambda a: np.swapaxes(a, -1, -2)  # noqa: E731
    bd11 = (n1 * e_sv).sum(1)
    bd12 = (n2 * e_sv).sum(1)
    coupling[:, v1, s11] = t(dx - bd11)
    coupling[:, v2, s22] = t(dy - bd12)
    coupling[:, v1, s12] = t(dy - bd12)
    coupling[:, v2, s12] = t(dx - bd11)

    # <sigma n, v_hat> with Cartesian trace components, then rotate into frames
    cart = np.zeros((nE, 3, 2, ne, 3 * nk))
    cart[:, :, 0, :, s11] = t(n1 * f_st)
    cart[:, :, 0, :, s12] = t(n2 * f_st)
    cart[:, :, 1, :, s12] = t(n1 * f_st)
    cart[:, :, 1, :, s22] = t(n2 * f_st)
    q = frames[mesh.elem_facets]  # (nE, 3, 2a, 2c)
    trace = np.einsum("elac,elams->elcms", q, cart).reshape(nE, 6 * ne, 3 * nk)

    stab_uu = np.zeros((nE, 2 * nv, 2 * nv))
    guu = np.einsum("el,elij->eij", tau, g_uu)
    stab_uu[:, v1, v1] = guu
    stab_uu[:, v2, v2] = guu
    # -tau <u_hat, v>: rows (v comp a, j), cols (edge l, frame comp c, m)
    ut = -np.einsum("el,elac,eljm->eajlcm", tau, q, h_ut)
    stab_ut = ut.reshape(nE, 2 * nv, 6 * ne)
    stab_tt = np.repeat(tau * hf, 2 * ne, axis=1)

    wk = element_compliance(mat, mesh.solid)
    mass_sigma = det[:, None, None] * np.einsum("eab,ij->eaibj", wk, np.eye(nk)).reshape(
        nE, 3 * nk, 3 * nk
    )
    rho = np.where(mesh.solid, mat.rho_s, mat.rho_f)
    return LocalBlocks(
        mass_u=rho * det,
        mass_sigma=mass_sigma,
        coupling=coupling,
        trace=trace,
        stab_uu=stab_uu,
        stab_ut=stab_ut,
        stab_tt=stab_tt,
        det=det,
    )


def local_matrices(blocks, solid, c_sigma_solid, c_sigma_fluid, c_u, spring=0.0):
    """Full element matrices for the form

        c_u (rho u, v) + c_sigma (A sigma, tau) + spring (u, v)_{Omega_s}
            + B_h(sigma, v) - B_h(tau, u) + stabilisation.
    """
    nE, nu, ns = blocks.coupling.shape
    nt = blocks.trace.shape[1]
    ni = ns + nu
    k_loc = np.zeros((nE, ni + nt, ni + nt))
    c_sig = np.where(solid, c_sigma_solid, c_sigma_fluid)
    k_loc[:, :ns, :ns] = c_sig[:, None, None] * blocks.mass_sigma
    k_loc[:, :ns, ns:ni] = -np.swapaxes(blocks.coupling, 1, 2)
    k_loc[:, :ns, ni:] = -np.swapaxes(blocks.trace, 1, 2)
    diag_u = c_u * blocks.mass_u + spring * blocks.det * solid
    k_loc[:, ns:ni, ns:ni] = blocks.stab_uu
    idx = np.arange(ns, ni)
    k_loc[:, idx, idx] += diag_u[:, None]
    k_loc[:, ns:ni, :ns] = blocks.coupling
    k_loc[:, ns:ni, ni:] = blocks.stab_ut
    k_loc[:, ni:, :ns] = blocks.trace
    k_loc[:, ni:, ns:ni] = np.swapaxes(blocks.stab_ut, 1, 2)
    tdx = np.arange(ni, ni + nt)
    k_loc[:, tdx, tdx] = blocks.stab_tt
    return k_loc


def cn_matrices(blocks, mesh, mat, dt):
    """Element matrices of one Crank-Nicolson step, written for the time means.

    With X = (X^{n+1} + X^n)/2 the step reads
    ``[(2/dt) M_t + M_Af + G + (beta_s dt/2) M_s] X = (2/dt) M_t X^n + loads``.
    """
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    return local_matrices(
        blocks, mesh.solid, 2.0 / dt, 1.0, 2.0 / dt, spring=mat.beta_s * dt / 2.0
    )


# -- boundary and interface data ---------------------------------------------


class BoundaryData:
    """Trace loads and constrained trace values at a given time.

    ``loads(t)`` returns a full-numbering vector holding <g, v_hat>_F on free
    trace dofs (tractions, normal/tangential stress data and the interface
    jump); ``values(t)`` returns the constrained trace coefficients.
    """

    def __init__(self, dofmap, interface_jump=None, quad_degree=None):
        self.dofmap = dofmap
        self.mesh = dofmap.mesh
        self.interface_jump = interface_jump
        k = dofmap.k
        self.rule = quad_edge(quad_degree if quad_degree is not None else 2 * k + 8)
        self.psi = edge_basis(k + 1).values(self.rule.points)
        self._pts = {}

    def _points(self, ids):
        key = id(ids)
        if key not in self._pts:
            self._pts[key] = (ids, facet_points(self.mesh, self.rule, ids))
        return self._pts[key][1]

    def _project(self, ids, vals, scale_by_length):
        # vals (nf, nq) -> (nf, ne) coefficients of int_F val psi (or mean-scaled)
        out = np.einsum("fq,q,qm->fm", vals, self.rule.weights, self.psi)
        if scale_by_length:
            out *= self.mesh.facet_lengths[ids][:, None]
        return out

    def _put(self, vec, ids, comp, coeffs):
        ne = self.dofmap.ne
        base = (ids * 2 + comp) * ne
        vec[base[:, None] + np.arange(ne)] += coeffs

    def loads(self, t):
        dm = self.dofmap
        out = np.zeros(dm.n_full)
        if self.interface_jump is not None and INTERFACE in self.mesh.labels:
            ids = self.mesh.labels[INTERFACE]
            p = self._points(ids)
            g = np.asarray(self.interface_jump(p[..., 0], p[..., 1], t), dtype=float)
            for c in range(2):
                gc = np.einsum("afq,fa->fq", g, dm.frames[ids][:, :, c])
                self._put(out, ids, c, self._project(ids, gc, True))
        for name, bc in dm.bcs.items():
            if bc.kind == "dirichlet" or bc.stress is None:
                continue
            ids = dm.bc_facets[name]
            p = self._points(ids)
            g = np.asarray(bc.stress(p[..., 0], p[..., 1], t), dtype=float)
            if bc.kind == "traction":
                for c in range(2):
                    gc = np.einsum("afq,fa->fq", g, dm.frames[ids][:, :, c])
                    self._put(out, ids, c, self._project(ids, gc, True))
            else:
                comp = 0 if bc.kind == "normal_stress" else 1
                g = np.broadcast_to(g, p.shape[:-1])
                self._put(out, ids, comp, self._project(ids, g, True))
        return out

    def values(self, t):
        dm = self.dofmap
        out = np.zeros(dm.n_full)
        for name, bc in dm.bcs.items():
            if bc.velocity is None or bc.kind == "traction":
                continue
            ids = dm.bc_facets[name]
            p = self._points(ids)
            u = np.asarray(bc.velocity(p[..., 0], p[..., 1], t), dtype=float)
            if bc.kind == "dirichlet":
                for c in range(2):
                    self._put(out, ids, c, self._project(ids, np.broadcast_to(u[c], p.shape[:-1]), False))
            else:
                comp = 1 if bc.kind == "normal_stress" else 0
                u = np.broadcast_to(u, p.shape[:-1])
                self._put(out, ids, comp, self._project(ids, u, False))
        out[dm.free_dofs] = 0.0
        return out

    def mean_loads(self, t0, t1):
        return 0.5 * (self.loads(t0) + self.loads(t1))


def apply_boundary_conditions(mesh, k, bcs, interface_jump=None):
    """Build the :class:`DofMap` and the :class:`BoundaryData` for ``bcs``."""
    dm = DofMap(mesh, k, bcs)
    return dm, BoundaryData(dm, interface_jump)


# -- condensation ----------------------------------------------------------


def _solve(solver, rhs):
    if isinstance(solver, DirectSolver):
        return solver.solve(rhs, criterion="backward")
    return solver.solve(rhs)


def _scatter(dofmap, local, n):
    """Assemble element trace vectors (nE, nt) into free numbering."""
    idx = dofmap.elem_trace.ravel()
    keep = idx >= 0
    return np.bincount(idx[keep], weights=local.ravel()[keep], minlength=n)


def _batched_inverse(a):
    try:
        inv = np.linalg.inv(a)
    except np.linalg.LinAlgError:
        inv = None
    if inv is None or not np.all(np.isfinite(inv)):
        for e in range(len(a)):
            try:
                np.linalg.inv(a[e])
            except np.linalg.LinAlgError:
                raise SingularMatrixError(
                    f"interior block of element {e} is singular "
                    "(degenerate geometry or non-positive time step)",
                    row=e,
                ) from None
        raise SingularMatrixError("interior block inversion produced non-finite values")
    return inv


REFINE_STEPS = 1


class CondensedSystem:
    """Static condensation of element-interior unknowns onto facet traces.

    Solving proceeds as: trace system for the free trace dofs, then
    element-by-element recovery of the interior unknowns.
    """

    def __init__(self, k_loc, dofmap, solver="direct", tol=1e-10):
        self.dofmap = dofmap
        ni = dofmap.n_interior
        self.k_loc = k_loc
        a = k_loc[:, :ni, :ni]
        b = k_loc[:, :ni, ni:]
        c = k_loc[:, ni:, :ni]
        d = k_loc[:, ni:, ni:]
        self.a_inv = _batched_inverse(a)
        self.a_inv_b = self.a_inv @ b
        self.c_a_inv = c @ self.a_inv
        self.schur = d - c @ self.a_inv_b
        idx = dofmap.elem_trace
        rows = np.broadcast_to(idx[:, :, None], self.schur.shape)
        cols = np.broadcast_to(idx[:, None, :], self.schur.shape)
        keep = (rows >= 0) & (cols >= 0)
        n = dofmap.n_free
        self.matrix = csr_from_triplets(rows[keep], cols[keep], self.schur[keep], (n, n))
        if solver == "direct":
            self.solver = DirectSolver(self.matrix)
        elif solver == "iterative":
            self.solver = IterativeSolver(self.matrix, tol=tol)
        else:
            raise ValueError(f"unknown solver {solver!r}")

    def solve(self, r_int, g_full, lam_full, refine=REFINE_STEPS):
        """Solve the full local/global system.

        ``r_int`` (nE, ni) interior right-hand sides; ``g_full`` trace loads
        and ``lam_full`` constrained trace values, both in full numbering.
        Returns interior values (nE, ni) and the full trace vector.

        The local blocks of nearly incompressible fluid elements are close to
        singular (element-constant pressure only couples to the trace), so the
        condensed solve is followed by ``refine`` passes of iterative
        refinement against the uncondensed residual.
        """
        dm = self.dofmap
        lam_c = lam_full.copy()
        lam_c[dm.free_dofs] = 0.0
        x, lam = self._solve_once(r_int, g_full, lam_c)
        for _ in range(refine):
            res_int, res_tr = _residual_parts(self.k_loc, dm, x, lam, r_int, g_full)
            g = np.zeros(dm.n_full)
            g[dm.free_dofs] = -res_tr
            dx, dlam = self._solve_once(-res_int, g, np.zeros(dm.n_full))
            x = x + dx
            lam = lam + dlam
        return x, lam

    def _solve_once(self, r_int, g_full, lam_c):
        dm = self.dofmap
        lam_loc_c = lam_c[dm.elem_trace_full]
        rhs_loc = -batched_matvec(self.c_a_inv, r_int)
        if np.any(lam_loc_c):
            rhs_loc -= batched_matvec(self.schur, lam_loc_c)
        rhs = _scatter(dm, rhs_loc, dm.n_free) + g_full[dm.free_dofs]
        sol = _solve(self.solver, rhs)
        lam = lam_c.copy()
        lam[dm.free_dofs] = sol
        lam_loc = lam[dm.elem_trace_full]
        x = batched_matvec(self.a_inv, r_int) - batched_matvec(self.a_inv_b, lam_loc)
        return x, lam

    def residual(self, x, lam, r_int, g_full):
        """Relative residual of the uncondensed equations."""
        return uncondensed_residual(self.k_loc, self.dofmap, x, lam, r_int, g_full)


def _residual_parts(k_loc, dofmap, x, lam, r_int, g_full):
    ni = dofmap.n_interior
    full = np.concatenate([x, lam[dofmap.elem_trace_full]], axis=1)
    prod = batched_matvec(k_loc, full)
    res_int = prod[:, :ni] - r_int
    res_tr = _scatter(dofmap, prod[:, ni:], dofmap.n_free) - g_full[dofmap.free_dofs]
    return res_int, res_tr


def uncondensed_residual(k_loc, dofmap, x, lam, r_int, g_full, abs_k=None):
    """Relative residual of the element equations and the assembled trace rows.

    The scale includes |K| |x| so that rows dominated by cancellation (large
    mass terms) are measured relative to the size of their terms.
    """
    ni = dofmap.n_interior
    lam_loc = lam[dofmap.elem_trace_full]
    full = np.concatenate([x, lam_loc], axis=1)
    prod = batched_matvec(k_loc, full)
    res_int = prod[:, :ni] - r_int
    res_tr = _scatter(dofmap, prod[:, ni:], dofmap.n_free) - g_full[dofmap.free_dofs]
    num = np.sqrt(np.sum(res_int**2) + np.sum(res_tr**2))
    # scale: right-hand side plus the magnitude of the terms that cancel in it
    terms = batched_matvec(np.abs(k_loc) if abs_k is None else abs_k, np.abs(full))
    scale = np.sqrt(
        np.sum(r_int**2) + np.sum(g_full[dofmap.free_dofs] ** 2) + np.sum(terms**2)
    )
    return num / scale if scale > 0 else num


class MonolithicSystem:
    """Uncondensed sparse solve over all interior and free trace dofs (oracle path)."""

    def __init__(self, k_loc, dofmap, solver="direct", tol=1e-10):
        self.dofmap = dofmap
        self.k_loc = k_loc
        nE = k_loc.shape[0]
        ni = dofmap.n_interior
        self.n_int = nE * ni
        gl = np.concatenate(
            [
                np.arange(nE * ni).reshape(nE, ni),
                np.where(dofmap.elem_trace >= 0, dofmap.elem_trace + self.n_int, -1),
            ],
            axis=1,
        )
        self.glob = gl
        rows = np.broadcast_to(gl[:, :, None], k_loc.shape)
        cols = np.broadcast_to(gl[:, None, :], k_loc.shape)
        keep = (rows >= 0) & (cols >= 0)
        n = self.n_int + dofmap.n_free
        self.matrix = csr_from_triplets(rows[keep], cols[keep], k_loc[keep], (n, n))
        if solver == "direct":
            self.solver = DirectSolver(self.matrix)
        elif solver == "iterative":
            self.solver = IterativeSolver(self.matrix, tol=tol)
        else:
            self.solver = None

    def solve(self, r_int, g_full, lam_full):
        dm = self.dofmap
        ni = dm.n_interior
        lam_c = lam_full.copy()
        lam_c[dm.free_dofs] = 0.0
        lam_loc_c = lam_c[dm.elem_trace_full]
        shift = np.einsum("eij,ej->ei", self.k_loc[:, :, ni:], lam_loc_c)
        rhs_int = r_int - shift[:, :ni]
        rhs_tr = g_full[dm.free_dofs] - _scatter(dm, shift[:, ni:], dm.n_free)
        sol = _solve(self.solver, np.concatenate([rhs_int.ravel(), rhs_tr]))
        x = sol[: self.n_int].reshape(r_int.shape)
        lam = lam_c
        lam[dm.free_dofs] = sol[self.n_int :]
        return x, lam

    def residual(self, x, lam, r_int, g_full):
        return uncondensed_residual(self.k_loc, self.dofmap, x, lam, r_int, g_full)


def condense(k_loc, dofmap, solver="direct", tol=1e-10):
    return CondensedSystem(k_loc, dofmap, solver=solver, tol=tol)


def global_matrix(k_loc, dofmap):
    """Sparse uncondensed matrix over interior and free trace dofs."""
    return MonolithicSystem(k_loc, dofmap, solver=None).matrix
