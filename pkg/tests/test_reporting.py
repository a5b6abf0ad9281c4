import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdgfsi import benchmarks
from hdgfsi.basis import project_elements
from hdgfsi.reporting import (
    COLUMNS,
    SAT,
    ErrorRecord,
    compute_errors,
    emit,
    mean_rate,
    pairwise_rates,
    parse_csv,
    rates,
    table_rows,
)
from hdgfsi.studies import dt_rule, run_case, semilog_fit
from hdgfsi.timestepping import CrankNicolson, State, _compact_coeffs, steps_for


def rec(k, h, es, eu, ep=1.0, dt=0.01, L=10):
    return ErrorRecord(k=k, h=h, dt=dt, L=L, e_sigma=es, e_u=eu, e_p=ep, seconds=0.5)


# -- rates -------------------------------------------------------------------------


def test_rate_of_quartered_error_is_two():
    assert pairwise_rates([1e-2, 2.5e-3], [1 / 8, 1 / 16]) == [pytest.approx(2.0, abs=1e-14)]


def test_equal_errors_rate_zero():
    assert pairwise_rates([3e-3, 3e-3], [1 / 8, 1 / 16]) == [0.0]


def test_reference_k2_stress_sequence_mean():
    r = pairwise_rates([7.70e-2, 8.28e-3, 1.08e-3, 1.33e-4], [1 / 8, 1 / 16, 1 / 32, 1 / 64])
    assert mean_rate(r) == pytest.approx(3.06, abs=0.005)


def test_saturated_pairs():
    r = pairwise_rates([1e-3, 0.0, 0.0], [1 / 2, 1 / 4, 1 / 8])
    assert r == [SAT, SAT]
    assert mean_rate(r) == SAT
    assert mean_rate([2.0, SAT, 4.0]) == 3.0


def test_rate_input_errors():
    with pytest.raises(ValueError):
        pairwise_rates([1.0], [0.5])
    with pytest.raises(ValueError):
        pairwise_rates([1.0, 0.5], [0.5, 0.5])
    with pytest.raises(ValueError):
        rates([rec(1, 0.5, 1, 1), rec(1, 0.25, 1, 1), rec(1, 0.5, 1, 1)])


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(1e-10, 1e3), min_size=2, max_size=6),
    st.floats(1e-3, 1e3),
)
def test_rates_invariant_under_scaling(errors, factor):
    hs = [2.0 ** -(i + 2) for i in range(len(errors))]
    a = pairwise_rates(errors, hs)
    b = pairwise_rates([e * factor for e in errors], hs)
    for x, y in zip(a, b):
        if x == SAT or y == SAT:
            continue
        assert x == pytest.approx(y, abs=1e-9)


def test_rates_scaling_by_7_3():
    recs = [rec(1, h, e, e / 10) for h, e in zip([1 / 4, 1 / 8, 1 / 16], [0.3, 0.08, 0.021])]
    scaled = [rec(1, r.h, 7.3 * r.e_sigma, 7.3 * r.e_u) for r in recs]
    a, b = rates(recs), rates(scaled)
    for q in ("sigma", "u"):
        np.testing.assert_allclose(a[q][0], b[q][0], rtol=1e-13)


def test_semilog_fit():
    slope, r = semilog_fit([1, 2, 3, 4], [math.exp(-2 * k + 1) for k in (1, 2, 3, 4)])
    assert slope == pytest.approx(-2.0, rel=1e-12) and r == pytest.approx(-1.0, abs=1e-12)


# -- emission ------------------------------------------------------------------------


def test_empty_records_header_only(tmp_path):
    path = emit([], tmp_path / "empty.csv", "csv")
    with open(path) as fh:
        assert fh.read().strip() == ",".join(COLUMNS)
    assert parse_csv(path) == []


def test_two_records_one_rate_row():
    rows = table_rows([rec(0, 1 / 4, 0.2, 0.02), rec(0, 1 / 8, 0.1, 0.005)])
    assert len(rows) == 3
    assert rows[0]["rate_sigma"] == ""
    assert float(rows[1]["rate_sigma"]) == pytest.approx(1.0)
    assert rows[2]["h"] == "mean"


def test_full_study_shape(tmp_path):
    recs = [rec(k, h, 10.0 ** -(k + i), 10.0 ** -(k + i + 1)) for k in range(4) for i, h in enumerate([1 / 4, 1 / 8, 1 / 16, 1 / 32])]
    path = emit(recs, tmp_path / "rates_h.csv", "csv", "h")
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == list(COLUMNS)
    assert len(rows) == 20
    assert sum(r["h"] == "mean" for r in rows) == 4
    assert len(parse_csv(path)) == 16
    md = (emit(recs, tmp_path / "rates_h.md", "markdown", "h")).read_text()
    assert md.count("| rates |") == 4
    assert md.splitlines()[0].startswith("| k | h |")


def test_dt_study_groups_by_step():
    recs = [rec(4, 1 / 16, e, e, dt=dt) for e, dt in zip([4e-3, 1e-3, 2.5e-4], [1 / 16, 1 / 32, 1 / 64])]
    rows = table_rows(recs, "dt")
    assert float(rows[-1]["rate_sigma"]) == pytest.approx(2.0)


def test_csv_round_trip(tmp_path, rng):
    recs = [
        ErrorRecord(k=int(k), h=float(h), dt=float(dt), L=int(L), e_sigma=float(a), e_u=float(b), e_p=float(c),
                    seconds=float(s))
        for k, h, dt, L, a, b, c, s in zip(
            [1, 1, 1], [0.25, 0.125, 0.0625], rng.uniform(0, 1, 3), [3, 7, 11],
            rng.uniform(0, 1, 3), rng.uniform(0, 1, 3), rng.uniform(0, 1, 3), rng.uniform(0, 9, 3),
        )
    ]
    recs[1].e_p = float("nan")
    back = parse_csv(emit(recs, tmp_path / "r.csv", "csv"))
    assert len(back) == 3
    for a, b in zip(recs, back):
        for name in ("k", "h", "dt", "L", "e_sigma", "e_u", "seconds"):
            assert getattr(a, name) == getattr(b, name)
        assert a.e_p == b.e_p or (math.isnan(a.e_p) and math.isnan(b.e_p))


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit([], tmp_path / "x", "latex")


def test_negative_error_rejected():
    with pytest.raises(ValueError):
        rec(0, 0.5, -1.0, 0.0)


# -- error norms ---------------------------------------------------------------------


def test_time_stamp_mismatch():
    pb = benchmarks.example1("L1")
    mesh = pb.make_mesh(1 / 2)
    cn = CrankNicolson(pb, mesh, 0, 0.1)
    with pytest.raises(ValueError, match="expected T"):
        compute_errors(cn.zero_state(), pb.exact, mesh, pb.materials, 0, T=0.3)


def test_zero_solution_zero_errors():
    pb = benchmarks.polynomial_exactness_case(1, scale=0.0)
    mesh = pb.make_mesh(1 / 2)
    cn = CrankNicolson(pb, mesh, 1, 0.1)
    r = compute_errors(cn.zero_state(t=0.5), pb.exact, mesh, pb.materials, 1, T=0.5)
    assert (r.e_sigma, r.e_u, r.e_p) == (0.0, 0.0, 0.0)


def projected_exact_state(pb, mesh, k, t):
    cn = CrankNicolson(pb, mesh, k, 0.1)
    z = cn.zero_state(t)
    ex = pb.exact
    u = project_elements(ex.velocity, mesh, k + 1, 2 * k + 8, args=(t,))
    s = _compact_coeffs(project_elements(ex.stress, mesh, k, 2 * k + 8, args=(t,)))
    return State(z.n, t, s, u, z.trace, z.d)


def test_projected_exact_solution_gives_projection_error():
    pb = benchmarks.example1("L1")
    mesh = pb.make_mesh(1 / 4)
    eu, es = [], []
    for k in range(4):
        r = compute_errors(projected_exact_state(pb, mesh, k, 0.3), pb.exact, mesh, pb.materials, k, T=0.3)
        eu.append(r.e_u)
        es.append(r.e_sigma)
    assert min(eu) > 0 and min(es) > 0
    assert all(b < a for a, b in zip(eu, eu[1:]))
    assert all(b < a for a, b in zip(es, es[1:]))


def test_example1_k1_h16_magnitude():
    pb = benchmarks.example1("L1")
    h, k = 1 / 16, 1
    r = run_case(pb, h, k, pb.T, steps_for(pb.T, dt_rule(h, k)))
    assert 9.51e-2 / 3 <= r.e_sigma <= 9.51e-2 * 3
