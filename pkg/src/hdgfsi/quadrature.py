"""Quadrature rules on the reference edge [0, 1] and reference triangle.

The reference triangle is {(x, y): x >= 0, y >= 0, x + y <= 1}. Low degrees
use small symmetric rules; everything above falls back to a collapsed
(Duffy) tensor product of Gauss-Jacobi and Gauss-Legendre rules, which has
positive weights and is exact to any requested degree up to
``MAX_TRIANGLE_DEGREE``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

MAX_TRIANGLE_DEGREE = 80


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes and weights on a reference domain.

    ``points`` has shape (nq,) on the edge and (nq, 2) on the triangle.
    Weights sum to the reference measure (1 for the edge, 1/2 for the
    triangle).
    """

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


_TABLES = {
    0: (np.array([[1 / 3, 1 / 3]]), np.array([0.5])),
    1: (np.array([[1 / 3, 1 / 3]]), np.array([0.5])),
    2: (
        np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]]),
        np.full(3, 1 / 6),
    ),
}


@lru_cache(maxsize=None)
def quad_edge(degree):
    """Gauss-Legendre rule on [0, 1] exact for polynomials of ``degree``."""
    if degree < 0:
        raise ValueError(f"exactness degree must be >= 0, got {degree}")
    n = degree // 2 + 1
    t, w = leggauss(n)
    return QuadratureRule(0.5 * (t + 1.0), 0.5 * w, degree)


def _collapsed(degree):
    # (u, v) in [0,1]^2 -> (x, y) = (u, (1 - u) v); Jacobian (1 - u) is
    # absorbed into a Gauss-Jacobi(1, 0) rule in u.
    n = (degree + 2) // 2
    tu, wu = roots_jacobi(n, 1.0, 0.0)
    u = 0.5 * (tu + 1.0)
    wu = wu / 4.0
    tv, wv = leggauss(n)
    v = 0.5 * (tv + 1.0)
    wv = 0.5 * wv
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pts = np.column_stack([uu.ravel(), ((1.0 - uu) * vv).ravel()])
    wts = np.outer(wu, wv).ravel()
    return pts, wts


@lru_cache(maxsize=None)
def quad_triangle(degree):
    """Positive-weight rule on the reference triangle exact to ``degree``.

    Raises
    ------
    ValueError
        If ``degree`` is negative or exceeds ``MAX_TRIANGLE_DEGREE``.
    """
    if degree < 0:
        raise ValueError(f"exactness degree must be >= 0, got {degree}")
    if degree > MAX_TRIANGLE_DEGREE:
        raise ValueError(
            f"triangle quadrature of degree {degree} not available "
            f"(maximum {MAX_TRIANGLE_DEGREE})"
        )
    if degree in _TABLES:
        pts, wts = _TABLES[degree]
    else:
        pts, wts = _collapsed(degree)
    pts = np.array(pts, dtype=float)
    wts = np.array(wts, dtype=float)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)
