import math

import numpy as np
import pytest

from hdgfsi import hooks, verify


def test_suite_result_line():
    assert verify.SuiteResult("energy", True).line() == "energy             PASS"
    assert verify.SuiteResult("exactness", False).line().endswith("FAIL")


def test_unit_square_sizes():
    m = verify.unit_square(1 / 4)
    assert m.n_elements == 32
    assert m.solid.sum() == 16


def test_energy_suite_and_sign_flip():
    assert verify.energy_suite(ks=(1,), h=1 / 4, steps=10).passed
    with hooks.mutated(stab_sign=-1.0):
        res = verify.energy_suite(ks=(1,), h=1 / 4, steps=10)
    assert not res.passed


def test_exactness_suite_and_trace_coefficient():
    assert verify.exactness_suite(ks=(1,), hs=(1 / 2,)).passed
    with hooks.mutated(af_trace_scale=0.5):
        assert not verify.exactness_suite(ks=(1,), hs=(1 / 2,)).passed


@pytest.mark.parametrize("k", [0, 2])
def test_trace_ratio_sampled_below_sharp(k):
    sharp, sampled = verify.trace_ratio(verify.unit_square(1 / 4), k, n_random=50)
    assert 0 < sampled <= sharp * (1 + 1e-10)
    assert math.isfinite(sharp)


def test_trace_ratio_independent_of_h():
    a, _ = verify.trace_ratio(verify.unit_square(1 / 2), 1, n_random=5)
    b, _ = verify.trace_ratio(verify.unit_square(1 / 8), 1, n_random=5)
    # structured meshes are scaled copies of the same elements
    assert b == pytest.approx(a, rel=1e-10)


def test_projection_of_polynomial_is_exact():
    mesh = verify.unit_square(1 / 2)
    assert verify.projection_error(mesh, 2, lambda x, y: x * x - 3 * x * y + 1) <= 1e-13
    assert verify.projection_error(mesh, 1, lambda x, y: x * x) > 1e-3


def test_fitted_slope():
    hs = np.array([1 / 4, 1 / 8, 1 / 16])
    assert verify.fitted_slope(hs, 3 * hs**2.5) == pytest.approx(2.5, rel=1e-12)


def test_run_all_reports_every_named_suite():
    lines = []
    out = verify.run_all(["energy"], report=lines.append)
    assert [r.name for r in out] == ["energy"]
    assert lines[-1] == "energy             PASS"
    assert any(s.startswith("  k=0") for s in lines)


def test_run_all_unknown_suite():
    with pytest.raises(KeyError):
        verify.run_all(["bogus"], report=None)
