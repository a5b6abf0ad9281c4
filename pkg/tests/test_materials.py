import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdgfsi.materials import (
    BLOOD,
    L1,
    L2,
    MaterialSet,
    apply_Af,
    apply_As,
    apply_Cf,
    apply_Cs,
    compliance_matrix,
    frobenius,
    h_norm,
    postprocess_pressure,
)
from hdgfsi.mesh import generate_structured

I = np.array([1.0, 1.0, 0.0])  # compact (s11, s22, s12)

moduli = st.floats(1e-2, 1e3)


def test_solid_identity_example():
    mat = MaterialSet(1, 1, 1, 1, 1, 1e6)
    assert np.allclose(apply_As(I, mat), I / 4, rtol=0, atol=1e-15)
    assert np.allclose(apply_Cs(I / 4, mat), I, rtol=0, atol=1e-15)


def test_deviatoric_and_zero():
    mat = MaterialSet(1, 3.0, 7.0, 1, 2.0, 1e6)
    dev = np.array([1.0, -1.0, 0.4])
    assert np.allclose(apply_As(dev, mat), dev / 6.0, rtol=1e-15)
    assert np.allclose(apply_Af(dev, mat), dev / 4.0, rtol=1e-15)
    assert np.all(apply_As(np.zeros(3), mat) == 0)


def test_fluid_identity_example():
    assert np.allclose(apply_Af(I, L1), I / (2e6 + 2), rtol=1e-14, atol=0)
    assert np.allclose(apply_Cf(apply_Af(I, L1), L1), I, rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1e3, 1e3))
def test_af_linear(c):
    assert np.allclose(apply_Af(c * I, L1), c * apply_Af(I, L1), rtol=1e-14, atol=1e-300)


@settings(max_examples=30, deadline=None)
@given(moduli, st.floats(0.0, 10.0), moduli, st.floats(0.0, 10.0))
def test_round_trip_random_tensors(mu_s, ratio_s, mu_f, ratio_f):
    # lam / mu <= 10 keeps the conditioning of C small enough for 1e-12
    mat = MaterialSet(1.0, mu_s, ratio_s * mu_s + 1e-300, 1.0, mu_f, ratio_f * mu_f + 1e-300)
    tau = np.random.default_rng(0).standard_normal((1000, 3))
    for c, a in ((apply_Cs, apply_As), (apply_Cf, apply_Af)):
        assert np.abs(c(a(tau, mat), mat) - tau).max() < 1e-12 * np.abs(tau).max()
        assert np.abs(a(c(tau, mat), mat) - tau).max() < 1e-12 * np.abs(tau).max()
        assert np.all(frobenius(a(tau, mat), tau) > 0)


@pytest.mark.parametrize("mat", [L1, L2, BLOOD], ids=["L1", "L2", "blood"])
def test_round_trip_named_sets(mat):
    # forward error of either composition is a few eps times cond(C) = 1 + lam / mu
    tau = np.random.default_rng(4).standard_normal((1000, 3))
    for solid, c, a in ((True, apply_Cs, apply_As), (False, apply_Cf, apply_Af)):
        mu, lam = mat.lame(solid)
        tol = 8 * np.finfo(float).eps * (1 + lam / mu) * np.abs(tau).max()
        assert np.abs(c(a(tau, mat), mat) - tau).max() <= max(tol, 1e-14)
        assert np.abs(a(c(tau, mat), mat) - tau).max() <= max(tol, 1e-14)
        assert np.all(frobenius(a(tau, mat), tau) > 0)


def test_incompressible_limit_is_deviatoric():
    mat = L1.with_(lam_f=1e9)
    tau = np.random.default_rng(1).standard_normal((50, 3))
    tr = tau[:, 0] + tau[:, 1]
    dev = tau - 0.5 * tr[:, None] * I
    lim = dev / (2 * mat.mu_f)
    assert np.abs(apply_Af(tau, mat) - lim).max() <= 1e-8 * np.abs(lim).max()


def test_compliance_matrix_matches_action():
    tau = np.random.default_rng(2).standard_normal((20, 3))
    sig = np.random.default_rng(3).standard_normal((20, 3))
    w = compliance_matrix(L1.mu_f, L1.lam_f)
    lhs = frobenius(apply_Af(sig, L1), tau)
    rhs = np.einsum("ni,ij,nj->n", tau, w, sig)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


def test_invalid_materials():
    with pytest.raises(ValueError):
        MaterialSet(1, -1, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        MaterialSet(1, 1, 1, 1, 1, 1, beta_s=-1)


def solid_unit_square():
    return generate_structured((0, 1, 0, 1), 2, 2, tag="s")


def test_h_norm_zero_and_identity():
    mesh = solid_unit_square()
    mat = MaterialSet(1, 1, 1, 1, 1, 1e6)
    zero = np.zeros((mesh.n_elements, 3, 1))
    assert h_norm(zero, mesh, mat) == 0
    one = np.zeros((mesh.n_elements, 3, 1))
    one[:, :2, 0] = 1 / np.sqrt(2.0)  # the orthonormal P0 function is sqrt(2)
    assert h_norm(one, mesh, mat) == pytest.approx(np.sqrt(0.5), rel=1e-13)
    ident = lambda x, y: np.stack([np.stack([1 + 0 * x, 0 * x]), np.stack([0 * x, 1 + 0 * x])])  # noqa: E731
    assert h_norm(ident, mesh, mat) == pytest.approx(np.sqrt(0.5), rel=1e-13)


def test_h_norm_equivalence_bounds(rng):
    mesh = generate_structured((0, 1, 0, 1), 3, 3, split_y=1 / 3)
    mat = MaterialSet(1, 2.0, 5.0, 1, 0.5, 1e4)
    ws = [compliance_matrix(*mat.lame(s)) for s in (False, True)]
    # compact components carry the off-diagonal twice in tau : tau
    scale = np.diag([1.0, 1.0, 2.0])
    eig = np.concatenate([np.linalg.eigvalsh(np.linalg.solve(scale, w)) for w in ws])
    lo, hi = np.sqrt(eig.min()), np.sqrt(eig.max())
    for _ in range(20):
        c = rng.standard_normal((mesh.n_elements, 3, 3))
        l2 = h_norm(c, mesh, MaterialSet(1, 0.5, 1e-12, 1, 0.5, 1e-12))  # plain L2 norm
        h = h_norm(c, mesh, mat)
        assert lo * l2 * (1 - 1e-12) <= h <= hi * l2 * (1 + 1e-12)


def test_pressure_examples():
    mesh = generate_structured((0, 1, 0, 1), 1, 1)
    sig = np.zeros((2, 3, 1))
    p0 = 2.5
    sig[:, :2, 0] = -p0
    p = postprocess_pressure(sig, mesh, L1)
    assert np.allclose(p, 2e6 / (2e6 + 2) * p0, rtol=1e-15)
    sig[:, 1, 0] = p0  # trace free
    assert np.all(postprocess_pressure(sig, mesh, L1) == 0)
    assert np.allclose(postprocess_pressure(3 * sig - 1, mesh, L1), 3 * postprocess_pressure(sig - 1 / 3, mesh, L1))


def test_pressure_on_solid_rejected():
    mesh = generate_structured((0, 1, 0, 1), 1, 2, split_y=0.5)
    with pytest.raises(ValueError, match="solid element"):
        postprocess_pressure(np.zeros((4, 3, 1)), mesh, L1, elements=[0, 1, 2])
