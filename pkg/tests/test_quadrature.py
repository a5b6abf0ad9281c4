from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdgfsi.quadrature import MAX_TRIANGLE_DEGREE, quad_edge, quad_triangle


def monomial_integral(a, b):
    # int_T x^a y^b over the reference triangle
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def integrate(rule, f):
    return float(np.sum(rule.weights * f(rule.points[:, 0], rule.points[:, 1])))


def test_triangle_constant():
    assert integrate(quad_triangle(0), lambda x, y: np.ones_like(x)) == pytest.approx(0.5, rel=1e-14)


def test_triangle_linear():
    assert integrate(quad_triangle(1), lambda x, y: x) == pytest.approx(1 / 6, rel=1e-14)


def test_triangle_x2y():
    assert integrate(quad_triangle(3), lambda x, y: x**2 * y) == pytest.approx(1 / 60, rel=1e-13)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 30), st.data())
def test_triangle_exact_to_declared_degree(degree, data):
    a = data.draw(st.integers(0, degree))
    b = data.draw(st.integers(0, degree - a))
    rule = quad_triangle(degree)
    val = integrate(rule, lambda x, y: x**a * y**b)
    assert val == pytest.approx(monomial_integral(a, b), rel=1e-13)


@pytest.mark.parametrize("degree", [0, 1, 2, 5, 12, 40])
def test_triangle_weights_positive_and_points_inside(degree):
    rule = quad_triangle(degree)
    assert np.all(rule.weights > 0)
    p = rule.points
    assert np.all(p >= 0) and np.all(p.sum(1) <= 1)
    assert rule.degree == degree


def test_triangle_degree_limits():
    with pytest.raises(ValueError, match="not available"):
        quad_triangle(MAX_TRIANGLE_DEGREE + 1)
    with pytest.raises(ValueError):
        quad_triangle(-1)


def test_edge_examples():
    assert np.sum(quad_edge(0).weights) == pytest.approx(1.0, rel=1e-15)
    r = quad_edge(3)
    assert np.sum(r.weights * r.points**3) == pytest.approx(0.25, rel=1e-14)
    r = quad_edge(7)
    assert len(r) == 4
    assert abs(np.sum(r.weights * r.points**6) - 1 / 7) < 1e-14


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 60), st.data())
def test_edge_exact(degree, data):
    p = data.draw(st.integers(0, degree))
    r = quad_edge(degree)
    assert np.sum(r.weights * r.points**p) == pytest.approx(1 / (p + 1), rel=1e-13)
