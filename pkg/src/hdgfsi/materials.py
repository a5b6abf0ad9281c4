"""Isotropic constitutive tensors, the weighted stress norm and pressure recovery.

Symmetric 2x2 tensors are stored in compact form as trailing-axis triples
``(t11, t22, t12)``. The Frobenius product of two such tensors is
``s11 t11 + s22 t22 + 2 s12 t12``.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import hooks
from .basis import element_points, evaluate_on, triangle_basis
from .quadrature import quad_triangle

DIM = 2


@dataclass(frozen=True)
class MaterialSet:
    rho_s: float
    mu_s: float
    lam_s: float
    rho_f: float
    mu_f: float
    lam_f: float
    beta_s: float = 0.0
    dim: int = DIM

    def __post_init__(self):
        for name in ("rho_s", "mu_s", "lam_s", "rho_f", "mu_f", "lam_f"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.beta_s < 0:
            raise ValueError(f"beta_s must be >= 0, got {self.beta_s}")
        if self.dim != DIM:
            raise ValueError("only d = 2 is supported")

    def with_(self, **changes):
        return replace(self, **changes)

    def lame(self, solid):
        return (self.mu_s, self.lam_s) if solid else (self.mu_f, self.lam_f)

    def rho(self, solid):
        return self.rho_s if solid else self.rho_f


def frobenius(s, t):
    s = np.asarray(s)
    t = np.asarray(t)
    return s[..., 0] * t[..., 0] + s[..., 1] * t[..., 1] + 2.0 * s[..., 2] * t[..., 2]


def _trace_identity(tr):
    out = np.zeros(np.shape(tr) + (3,))
    out[..., 0] = tr
    out[..., 1] = tr
    return out


def stiffness(mu, lam, tau, d=DIM):
    """C tau = 2 mu tau + lam tr(tau) I."""
    tau = np.asarray(tau, dtype=float)
    return 2.0 * mu * tau + lam * _trace_identity(tau[..., 0] + tau[..., 1])


def compliance(mu, lam, tau, d=DIM):
    """A tau = C^{-1} tau = (tau - lam / (2 mu + d lam) tr(tau) I) / (2 mu)."""
    tau = np.asarray(tau, dtype=float)
    tr = tau[..., 0] + tau[..., 1]
    # deviatoric plus spherical split; avoids cancellation when lam >> mu
    return (tau - _trace_identity(tr) / d) / (2.0 * mu) + _trace_identity(tr) / (d * (2.0 * mu + d * lam))


def apply_Cs(tau, mat):
    return stiffness(mat.mu_s, mat.lam_s, tau)


def apply_As(tau, mat):
    return compliance(mat.mu_s, mat.lam_s, tau)


def apply_Cf(tau, mat):
    return stiffness(mat.mu_f, mat.lam_f, tau)


def apply_Af(tau, mat):
    return compliance(mat.mu_f, mat.lam_f, tau)


def compliance_matrix(mu, lam, d=DIM, trace_scale=1.0):
    """3x3 matrix W with (A sigma) : tau = tau_c^T W sigma_c in compact form."""
    a = 1.0 / (2.0 * mu)
    b = lam / (2.0 * mu * (2.0 * mu + d * lam))
    # a - b written without cancellation, plus the hook's deviation from it
    diag = a * (1.0 - 1.0 / d) + 1.0 / (d * (2.0 * mu + d * lam)) + (1.0 - trace_scale) * b
    off = -trace_scale * b
    return np.array([[diag, off, 0.0], [off, diag, 0.0], [0.0, 0.0, 2.0 * a]])


def element_compliance(mat, solid):
    """Per-element compliance matrices W, shape (ne, 3, 3)."""
    ws = compliance_matrix(mat.mu_s, mat.lam_s)
    wf = compliance_matrix(mat.mu_f, mat.lam_f, trace_scale=hooks.get("af_trace_scale"))
    return np.where(np.asarray(solid)[:, None, None], ws, wf)


def to_compact(t):
    """(2, 2, ...) tensor array -> (..., 3) compact array (symmetrised)."""
    t = np.asarray(t)
    return np.stack([t[0, 0], t[1, 1], 0.5 * (t[0, 1] + t[1, 0])], axis=-1)


def h_norm(sigma, mesh, mat, degree=None, quad_degree=None, t=None):
    """||sigma||_H = (int_Os A_s s:s + int_Of A_f s:s)^(1/2).

    ``sigma`` is either element coefficients of shape (ne, 3, dim P_k) (then
    ``degree`` is inferred) or a tensor-valued callable (``t`` passed as an
    extra argument when given).
    """
    if isinstance(sigma, np.ndarray):
        from .basis import dim_p

        k = degree
        if k is None:
            n = sigma.shape[-1]
            k = next(m for m in range(64) if dim_p(m) == n)
        rule = quad_triangle(quad_degree or 2 * k + 2)
        vals = np.einsum("eci,qi->eqc", sigma, triangle_basis(k).values(rule.points))
    else:
        rule = quad_triangle(quad_degree or 12)
        pts = element_points(mesh, rule)
        args = () if t is None else (t,)
        vals = to_compact(evaluate_on(sigma, pts[..., 0], pts[..., 1], mesh.solid, *args))
    return np.sqrt(weighted_square(vals, mesh, mat, rule))


def weighted_square(vals, mesh, mat, rule):
    """Sum over elements of int_K A sigma : sigma for compact point values (ne, nq, 3)."""
    w = np.stack([compliance_matrix(*mat.lame(False)), compliance_matrix(*mat.lame(True))])
    wk = w[mesh.solid.astype(int)]
    dens = np.einsum("eqi,eij,eqj->eq", vals, wk, vals)
    return float(np.einsum("eq,q,e->", dens, rule.weights, mesh.det_jacobian))


def pressure_factor(mat):
    return -mat.lam_f / (2.0 * mat.mu_f + mat.dim * mat.lam_f)


def postprocess_pressure(sigma, mesh, mat, elements=None):
    """Pressure p = -lam_f / (2 mu_f + d lam_f) tr(sigma) on fluid elements.

    ``sigma`` holds coefficients (nE, 3, n) for the whole mesh; the result has
    shape (len(elements), n) and lives in the same polynomial space.
    """
    els = np.flatnonzero(~mesh.solid) if elements is None else np.asarray(elements)
    if np.any(mesh.solid[els]):
        bad = els[mesh.solid[els]][0]
        raise ValueError(f"pressure requested on solid element {bad}")
    return pressure_factor(mat) * (sigma[els, 0] + sigma[els, 1])


L1 = MaterialSet(rho_s=1.0, mu_s=1.0, lam_s=1.0, rho_f=1.0, mu_f=1.0, lam_f=1e6)
L2 = MaterialSet(rho_s=1e3, mu_s=1e6, lam_s=1e10, rho_f=1.0, mu_f=1.0, lam_f=1e6)
BLOOD = MaterialSet(
    rho_s=1.1, mu_s=0.575e6, lam_s=1.7e6, rho_f=1.0, mu_f=1.0, lam_f=1e6, beta_s=4e6
)
