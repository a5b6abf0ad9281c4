"""Orthonormal polynomial bases, L2 projections and element-side evaluation.

Triangle bases are obtained by orthonormalising graded monomials (centred at
the reference centroid) against an exact quadrature rule; the first
``dim P_m`` functions of the degree-``m'`` basis span P_m for every
``m <= m'``. Edge bases are shifted, normalised Legendre polynomials on
[0, 1].

Field callables follow one convention throughout the package: ``f(x, y)``
with equally shaped coordinate arrays returns ``x.shape`` for scalars,
``(2, *x.shape)`` for vectors and ``(2, 2, *x.shape)`` for tensors. A
:class:`Piecewise` wraps separate fluid and solid expressions.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .quadrature import quad_edge, quad_triangle

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_CENTRE = 1.0 / 3.0


def dim_p(m):
    """Dimension of P_m on a triangle."""
    return (m + 1) * (m + 2) // 2


def _exponents(m):
    return [(d - j, j) for d in range(m + 1) for j in range(d + 1)]


class TriangleBasis:
    """L2(K_ref)-orthonormal basis of P_m on the reference triangle."""

    def __init__(self, degree):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.degree = degree
        self.exponents = np.array(_exponents(degree))
        self.size = len(self.exponents)
        rule = quad_triangle(2 * degree + 2)
        vand = self._monomials(rule.points)
        a = np.sqrt(rule.weights)[:, None] * vand
        # Householder QR is Gram-Schmidt done stably; column order is kept,
        # so the span of the first j columns is preserved.
        _, r = np.linalg.qr(a)
        r *= np.sign(np.diag(r))[:, None]
        self.coeffs = np.linalg.inv(r)
        # a second pass cleans up residual non-orthogonality at high degree
        g = (a @ self.coeffs).T @ (a @ self.coeffs)
        self.coeffs = self.coeffs @ np.linalg.inv(np.linalg.cholesky(g)).T

    def _monomials(self, pts):
        pts = np.atleast_2d(pts)
        x = pts[:, 0] - _CENTRE
        y = pts[:, 1] - _CENTRE
        ex = self.exponents
        return x[:, None] ** ex[:, 0] * y[:, None] ** ex[:, 1]

    def _monomial_grads(self, pts):
        pts = np.atleast_2d(pts)
        x = (pts[:, 0] - _CENTRE)[:, None]
        y = (pts[:, 1] - _CENTRE)[:, None]
        a, b = self.exponents[:, 0], self.exponents[:, 1]
        dx = np.where(a > 0, a * x ** np.maximum(a - 1, 0), 0.0) * y**b
        dy = np.where(b > 0, b * y ** np.maximum(b - 1, 0), 0.0) * x**a
        return np.stack([dx, dy], axis=-1)

    def values(self, pts):
        """Basis values, shape (npts, size)."""
        return self._monomials(pts) @ self.coeffs

    def gradients(self, pts):
        """Reference gradients, shape (npts, size, 2)."""
        g = self._monomial_grads(pts)
        return np.einsum("pmd,mn->pnd", g, self.coeffs)


class EdgeBasis:
    """L2(0, 1)-orthonormal Legendre basis of P_m."""

    def __init__(self, degree):
        if degree < 0:
            raise ValueError("degree must be >= 0")
        self.degree = degree
        self.size = degree + 1

    def values(self, s):
        s = np.asarray(s, dtype=float)
        out = legendre.legvander(2.0 * s - 1.0, self.degree)
        return out * np.sqrt(2.0 * np.arange(self.size) + 1.0)


@lru_cache(maxsize=None)
def triangle_basis(degree):
    return TriangleBasis(degree)


@lru_cache(maxsize=None)
def edge_basis(degree):
    return EdgeBasis(degree)


@dataclass(frozen=True)
class Piecewise:
    """A field given by separate expressions on the fluid and solid parts."""

    fluid: object
    solid: object

    def __call__(self, x, y, *args, solid=False):
        f = self.solid if solid else self.fluid
        return f(x, y, *args)


def evaluate_on(f, x, y, solid, *args):
    """Evaluate ``f`` at element points, dispatching :class:`Piecewise` fields.

    ``x``, ``y`` have shape (ne, nq) and ``solid`` shape (ne,). The result has
    the field's component axes first, then (ne, nq).
    """
    if not isinstance(f, Piecewise):
        return np.asarray(f(x, y, *args), dtype=float)
    parts = []
    idx = []
    for flag in (False, True):
        sel = np.flatnonzero(solid == flag)
        if sel.size:
            parts.append(np.asarray(f(x[sel], y[sel], *args, solid=flag), dtype=float))
            idx.append(sel)
    lead = parts[0].shape[:-2]
    out = np.empty(lead + x.shape)
    for sel, val in zip(idx, parts):
        out[..., sel, :] = val
    return out


# -- mesh-level evaluation and projection ----------------------------------


def element_points(mesh, rule, elements=None):
    """Physical quadrature points, shape (ne, nq, 2)."""
    el = slice(None) if elements is None else elements
    x0 = mesh.vertices[mesh.triangles[el, 0]]
    return x0[:, None, :] + np.einsum("eij,qj->eqi", mesh.jacobian[el], rule.points)


def facet_points(mesh, rule, facets=None):
    """Physical points along facets (in facet orientation), shape (nf, nq, 2)."""
    fs = slice(None) if facets is None else facets
    a = mesh.vertices[mesh.facets[fs, 0]]
    b = mesh.vertices[mesh.facets[fs, 1]]
    return a[:, None, :] + rule.points[None, :, None] * (b - a)[:, None, :]


def to_reference(mesh, elements, pts):
    """Map physical points (ne, np, 2) of the given elements to reference coords."""
    x0 = mesh.vertices[mesh.triangles[elements, 0]]
    return np.einsum("eij,epj->epi", mesh.inv_jacobian[elements], pts - x0[:, None, :])


def _as_components(val, ncomp_axes):
    # move component axes to a single trailing axis: (ne, nq, ncomp)
    ne, nq = val.shape[-2:]
    if ncomp_axes == 0:
        return val[..., None]
    comps = val.reshape(-1, ne, nq)
    return np.moveaxis(comps, 0, -1)


def project_elements(f, mesh, degree, quad_degree=None, args=(), elements=None):
    """L2 projection onto P_m on each element (Pi_T^m).

    Returns coefficients of shape (ne, ncomp, dim P_m) for vector/tensor
    fields (tensor components flattened row-major) and (ne, dim P_m) for
    scalars.
    """
    basis = triangle_basis(degree)
    rule = quad_triangle(quad_degree if quad_degree is not None else 2 * degree + 4)
    els = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    pts = element_points(mesh, rule, els)
    val = evaluate_on(f, pts[..., 0], pts[..., 1], mesh.solid[els], *args)
    scalar = val.ndim == 2
    phi = basis.values(rule.points)
    comps = _as_components(val, 0 if scalar else 1)
    # int_K phi_i phi_j = detJ delta_ij, so detJ cancels against the
    # physical quadrature weights
    out = np.einsum("eqc,q,qi->eci", comps, rule.weights, phi)
    return out[:, 0, :] if scalar else out


def project_facets(g, mesh, degree, quad_degree=None, args=(), facets=None):
    """L2 projection onto P_m on each facet (Pi_F^m), facet orientation.

    Returns (nf, ncomp, m + 1) for vector fields, (nf, m + 1) for scalars.
    """
    basis = edge_basis(degree)
    rule = quad_edge(quad_degree if quad_degree is not None else 2 * degree + 4)
    fs = np.arange(mesh.n_facets) if facets is None else np.asarray(facets)
    pts = facet_points(mesh, rule, fs)
    val = np.asarray(g(pts[..., 0], pts[..., 1], *args), dtype=float)
    scalar = val.ndim == 2
    comps = _as_components(val, 0 if scalar else 1)
    psi = basis.values(rule.points)
    out = np.einsum("fqc,q,qi->fci", comps, rule.weights, psi)
    return out[:, 0, :] if scalar else out


def project_element(f, mesh, element, degree, quad_degree=None):
    """Pi_K^m of ``f`` on a single element."""
    return project_elements(f, mesh, degree, quad_degree, elements=[element])[0]


def project_facet(g, mesh, facet, degree, quad_degree=None):
    """Pi_F^m of ``g`` on a single facet."""
    return project_facets(g, mesh, degree, quad_degree, facets=[facet])[0]


def eval_elements(coeffs, degree, ref_pts):
    """Evaluate element coefficients (ne, ..., n) at reference points (np, 2)."""
    phi = triangle_basis(degree).values(ref_pts)
    return np.einsum("e...i,qi->e...q", coeffs, phi)


def eval_at_points(coeffs, degree, mesh, elements, pts):
    """Evaluate per-element coefficients at physical points.

    ``coeffs`` has shape (nE, ..., n); ``elements`` (npts,) picks the element
    holding each of the physical points ``pts`` (npts, 2).
    """
    x0 = mesh.vertices[mesh.triangles[elements, 0]]
    ref = np.einsum("pij,pj->pi", mesh.inv_jacobian[elements], pts - x0)
    phi = triangle_basis(degree).values(ref)
    return np.einsum("p...i,pi->p...", coeffs[elements], phi)


def locate(mesh, pts, prefer_solid=None, tol=1e-12):
    """Index of an element containing each point (first match).

    ``prefer_solid`` breaks ties for points on the interface.
    """
    pts = np.atleast_2d(pts)
    x0 = mesh.vertices[mesh.triangles[:, 0]]
    ref = np.einsum("eij,pej->pei", mesh.inv_jacobian, pts[:, None, :] - x0[None])
    inside = (ref[..., 0] >= -tol) & (ref[..., 1] >= -tol) & (ref.sum(-1) <= 1 + tol)
    if prefer_solid is not None:
        score = inside * (1 + (mesh.solid == prefer_solid)[None, :])
    else:
        score = inside.astype(int)
    if not np.all(inside.any(axis=1)):
        bad = pts[~inside.any(axis=1)][0]
        raise ValueError(f"point ({bad[0]:.6g}, {bad[1]:.6g}) outside the mesh")
    return np.argmax(score, axis=1)


def project_state(u0, sigma0_s, mesh, k, quad_degree=None):
    """Projected initial data ``(u, u_hat, sigma_s)`` for degree ``k``.

    ``u`` is Pi_T^{k+1} u0 on every element, shape (ne, 2, dim P_{k+1});
    ``u_hat`` is Pi_F^{k+1} of the trace of u0 in Cartesian components, shape
    (nf, 2, k + 2), zero on boundary facets; ``sigma_s`` is Pi_T^k sigma0_s
    in compact form (s11, s22, s12) on the solid elements, shape
    (n_solid, 3, dim P_k). Either field may be ``None`` (zero).
    """
    qd = quad_degree if quad_degree is not None else 2 * k + 8
    ne, nf = mesh.n_elements, mesh.n_facets
    u = np.zeros((ne, 2, dim_p(k + 1)))
    u_hat = np.zeros((nf, 2, k + 2))
    if u0 is not None:
        u = project_elements(u0, mesh, k + 1, qd)
        inner = mesh.interior_facets
        if not isinstance(u0, Piecewise):
            if inner.size:
                u_hat[inner] = project_facets(u0, mesh, k + 1, qd, facets=inner)
        else:
            # each facet takes the expression of its owner element's side
            owner_solid = mesh.solid[mesh.facet_elems[inner, 0]]
            for flag, f in ((False, u0.fluid), (True, u0.solid)):
                sel = inner[owner_solid == flag]
                if sel.size:
                    u_hat[sel] = project_facets(f, mesh, k + 1, qd, facets=sel)
    solid = np.flatnonzero(mesh.solid)
    sigma_s = np.zeros((solid.size, 3, dim_p(k)))
    if sigma0_s is not None and solid.size:
        c = project_elements(sigma0_s, mesh, k, qd, elements=solid)
        sigma_s = np.stack([c[:, 0], c[:, 3], 0.5 * (c[:, 1] + c[:, 2])], axis=1)
    return u, u_hat, sigma_s
