"""Quadrature rules on the reference interval [0, 1] and the reference
triangle with vertices (0, 0), (1, 0), (0, 1).

Triangle rules are collapsed (Duffy) tensor products of Gauss-Jacobi and
Gauss-Legendre rules, which makes the exactness degree certifiable for any
requested degree.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 60


@dataclass(frozen=True)
class QuadratureRule:
    """Points (n, dim) and weights (n,) on a reference cell or facet."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)


def _check_degree(degree):
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}")


@lru_cache(maxsize=None)
def gauss_interval(degree):
    """Gauss-Legendre rule on [0, 1] exact for polynomials of ``degree``."""
    _check_degree(degree)
    n = degree // 2 + 1
    x, w = roots_legendre(n)
    pts = 0.5 * (x + 1.0)
    rule = QuadratureRule(pts[:, None], 0.5 * w, degree)
    rule.points.flags.writeable = False
    rule.weights.flags.writeable = False
    return rule


@lru_cache(maxsize=None)
def gauss_triangle(degree):
    """Collapsed Gauss rule on the reference triangle, exact to ``degree``.

    Uses the map (s, t) -> (s (1 - t), t) with Gauss-Jacobi(1, 0) in t so
    the Jacobian factor (1 - t) is absorbed into the weight.
    """
    _check_degree(degree)
    n = degree // 2 + 1
    xs, ws = roots_legendre(n)
    xt, wt = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (xs + 1.0)
    ws = 0.5 * ws
    t = 0.5 * (xt + 1.0)
    wt = wt / 4.0  # (1 - x)/2 factor and dx/2
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    pts = np.column_stack([(S * (1.0 - T)).ravel(), T.ravel()])
    rule = QuadratureRule(pts, W.ravel(), degree)
    rule.points.flags.writeable = False
    rule.weights.flags.writeable = False
    return rule


def quadrature(kind, degree, dim=1):
    """Return a rule for ``kind`` in {"cell", "facet"} on a ``dim``-mesh.

    Facets of a 1D mesh are points; their rule is the single unit point mass.
    """
    _check_degree(degree)
    if kind == "cell":
        if dim == 1:
            return gauss_interval(degree)
        if dim == 2:
            return gauss_triangle(degree)
    elif kind == "facet":
        if dim == 1:
            return QuadratureRule(np.zeros((1, 0)), np.ones(1), MAX_DEGREE)
        if dim == 2:
            return gauss_interval(degree)
    raise ValueError(f"no {kind} quadrature for dim={dim}")


def composite_interval(degree, breakpoints=()):
    """Gauss rule on [0, 1] split at interior ``breakpoints``."""
    edges = np.concatenate([[0.0], np.sort(np.asarray(breakpoints, float)), [1.0]])
    base = gauss_interval(degree)
    pts, wts = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi - lo <= 0.0:
            continue
        pts.append(lo + (hi - lo) * base.points[:, 0])
        wts.append((hi - lo) * base.weights)
    return QuadratureRule(np.concatenate(pts)[:, None], np.concatenate(wts), degree)
