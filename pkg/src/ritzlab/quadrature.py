"""Quadrature on the reference triangle, 1D Gauss rules and polar rules."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import ceil

import numpy as np
from scipy.special import roots_jacobi

__all__ = ["QuadratureRule", "triangle_rule", "composite_rule", "gauss_legendre01", "monomial_integral"]


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points with weights summing to 1 (multiply by the area)."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def _orbits(specs):
    pts, wts = [], []
    for w, coords in specs:
        if len(coords) == 1:
            pts.append([1 / 3, 1 / 3, 1 / 3])
            wts.append(w)
        elif len(coords) == 2:
            a, b = coords
            for p in ([a, b, b], [b, a, b], [b, b, a]):
                pts.append(p)
                wts.append(w)
        else:
            a, b, c = coords
            for p in ([a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]):
                pts.append(p)
                wts.append(w)
    return np.array(pts), np.array(wts)


# Dunavant's symmetric 12-point rule, exact to degree 6.
_DUNAVANT6 = [
    (0.116786275726379, (0.501426509658179, 0.249286745170910)),
    (0.050844906370207, (0.873821971016996, 0.063089014491502)),
    (0.082851075618374, (0.053145049844817, 0.310352451033784, 0.636502499121399)),
]


def _collapsed_gauss(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Conical product rule (Gauss-Jacobi x Gauss-Legendre) exact to ``degree``."""
    n = max(1, ceil((degree + 1) / 2))
    s, ws = roots_jacobi(n, 1.0, 0.0)
    x = 0.5 * (1.0 + s)
    wx = ws / 4.0
    t, wt = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (1.0 + t)
    wt = wt / 2.0
    X, T = np.meshgrid(x, t, indexing="ij")
    W = np.outer(wx, wt)
    xi = X.ravel()
    eta = ((1.0 - X) * T).ravel()
    pts = np.column_stack([1.0 - xi - eta, xi, eta])
    return pts, 2.0 * W.ravel()


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Cheapest available rule exact for polynomials of total degree ``degree``."""
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if degree <= 1:
        pts, wts = np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
        exact = 1
    elif degree == 2:
        pts, wts = _orbits([(1 / 3, (2 / 3, 1 / 6))])
        exact = 2
    elif degree <= 6:
        pts, wts = _orbits(_DUNAVANT6)
        wts = wts / wts.sum()
        exact = 6
    else:
        pts, wts = _collapsed_gauss(degree)
        exact = degree
    for a in (pts, wts):
        a.setflags(write=False)
    return QuadratureRule(pts, wts, exact)


@lru_cache(maxsize=None)
def composite_rule(degree: int, splits: int) -> QuadratureRule:
    """``triangle_rule(degree)`` repeated on the 4**splits red sub-triangles."""
    base = triangle_rule(degree)
    tris = [np.eye(3)]
    for _ in range(splits):
        nxt = []
        for c in tris:
            m01, m12, m20 = (c[0] + c[1]) / 2, (c[1] + c[2]) / 2, (c[2] + c[0]) / 2
            nxt += [np.array(t) for t in ([c[0], m01, m20], [m01, c[1], m12], [m20, m12, c[2]], [m01, m12, m20])]
        tris = nxt
    pts = np.concatenate([base.points @ c for c in tris])
    wts = np.tile(base.weights, len(tris)) / len(tris)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, base.degree)


@lru_cache(maxsize=None)
def gauss_legendre01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of xi**a * eta**b over the reference triangle."""
    from math import factorial

    return factorial(a) * factorial(b) / factorial(a + b + 2)
