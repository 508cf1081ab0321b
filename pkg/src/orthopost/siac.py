"""B-spline SIAC kernels and exact convolution of 1D piecewise polynomials.

The filtered field is returned as a :class:`SubdividedPolyField`.  On a
uniform mesh with kernel scaling equal to the mesh size, the value of the
filtered field on a cell depends on the nodal values of neighbouring cells
through a translation-invariant stencil, which is tabulated once.  Near the
boundary the data is extended by odd reflection about the boundary values.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

from .space import LagrangeBasis, SubdividedPolyField


class UnsupportedMeshError(ValueError):
    pass


def bspline_eval(order, x):
    """Central B-spline psi^(order) via the recurrence, zero off its support."""
    if order < 1:
        raise ValueError("B-spline order must be at least 1")
    x = np.asarray(x, dtype=float)
    if order == 1:
        return np.where((x >= -0.5) & (x < 0.5), 1.0, 0.0)
    m = order - 1
    return (
        (x + 0.5 * (m + 1)) * bspline_eval(m, x + 0.5) + (0.5 * (m + 1) - x) * bspline_eval(m, x - 0.5)
    ) / m


def bspline_knots(order):
    return -0.5 * order + np.arange(order + 1)


def _gauss(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _piecewise_integral(fn, breaks, npts):
    """Integrate ``fn`` over consecutive intervals of ``breaks`` with Gauss."""
    t, w = _gauss(npts)
    total = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi > lo:
            total += (hi - lo) * np.dot(w, fn(lo + (hi - lo) * t))
    return total


def kernel_coefficients(r, m):
    """Weights c_gamma, gamma = -r..r, of the kernel reproducing x^j, j <= 2r."""
    if r < 0 or m < 0:
        raise ValueError("r and m must be non-negative")
    order = m + 1
    knots = bspline_knots(order)
    npts = (2 * r + m) // 2 + 2
    gammas = np.arange(-r, r + 1)
    M = np.zeros((2 * r + 1, 2 * r + 1))
    for col, gam in enumerate(gammas):
        for j in range(2 * r + 1):
            M[j, col] = _piecewise_integral(
                lambda x, g=gam, j=j: bspline_eval(order, x - g) * x**j, knots + gam, npts
            )
    rhs = np.zeros(2 * r + 1)
    rhs[0] = 1.0
    if np.linalg.cond(M) > 1e14:
        raise np.linalg.LinAlgError(f"singular moment matrix for r={r}, m={m}")
    c = np.linalg.solve(M, rhs)
    return 0.5 * (c + c[::-1])


@dataclass(frozen=True)
class KernelSpec:
    r: int
    m: int
    coefficients: tuple
    scale: float = None  # None: use the mesh size

    @classmethod
    def build(cls, r, m, scale=None):
        return cls(r, m, tuple(kernel_coefficients(r, m)), scale)

    @property
    def order(self):
        return self.m + 1

    @property
    def half_width(self):
        """Support radius r + (m + 1)/2 in units of the scaling."""
        return self.r + 0.5 * (self.m + 1)

    @property
    def width(self):
        return 2 * self.r + self.m + 1

    def knots(self):
        """Sorted breakpoints of the kernel."""
        base = bspline_knots(self.order)
        return np.unique(np.concatenate([base + g for g in range(-self.r, self.r + 1)]))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for c, g in zip(self.coefficients, range(-self.r, self.r + 1)):
            out = out + c * bspline_eval(self.order, x - g)
        return out

    def moment(self, j):
        knots = self.knots()
        npts = (j + self.m) // 2 + 2
        return _piecewise_integral(lambda x: self(x) * x**j, knots, npts)


def default_kernel(p):
    """m = 1 and r = ceil((p + 1) / 2)."""
    if p < 1:
        raise ValueError("polynomial degree must be at least 1")
    return KernelSpec.build(math.ceil((p + 1) / 2), 1)


@dataclass(frozen=True)
class MirrorExtension:
    """Reflection of the data about (a, g(a)) and (b, g(b)).

    The default is odd reflection, u(a - s) = 2 g(a) - u(a + s).  With
    ``parity="even"`` on a side the data is mirrored without the sign
    change, u(a - s) = u(a + s); this is exact for solutions that are
    even about that end point.
    """

    left: float = 0.0
    right: float = 0.0
    left_parity: str = "odd"
    right_parity: str = "odd"

    def __post_init__(self):
        for par in (self.left_parity, self.right_parity):
            if par not in ("odd", "even"):
                raise ValueError(f"parity must be 'odd' or 'even', got {par!r}")

    def extend(self, U, reach):
        """Nodal values of cells -reach .. n-1+reach from U (n, p+1)."""
        n = len(U)
        out = np.empty((n + 2 * reach, U.shape[1]))
        for k in range(-reach, n + reach):
            out[k + reach] = self._cell(U, k)
        return out

    def _cell(self, U, k):
        n = len(U)
        if 0 <= k < n:
            return U[k]
        if k < 0:
            inner = self._cell(U, -k - 1)[::-1]
            return inner if self.left_parity == "even" else 2.0 * self.left - inner
        inner = self._cell(U, 2 * n - k - 1)[::-1]
        return inner if self.right_parity == "even" else 2.0 * self.right - inner


def _sample_points(npts):
    k = np.arange(npts)
    return 0.5 - 0.5 * np.cos((2 * k + 1) * np.pi / (2 * npts))


def convolution_stencil(spec, p):
    """Tabulate the stencil of the filter for degree-``p`` nodal data.

    Returns (breakpoints, sample points per sub-cell, offsets, W) with
    W[d, sub, s, a] = int_0^1 K(offset_d + xi_s - eta) phi_a(eta) d eta.
    """
    frac = (0.5 * spec.order) % 1.0
    bps = np.array([frac]) if frac > 0 else np.zeros(0)
    edges = np.concatenate([[0.0], bps, [1.0]])
    deg = p + spec.m + 1
    s = _sample_points(deg + 1)
    basis = LagrangeBasis(1, p)
    reach = int(math.ceil(spec.half_width)) + 1
    offsets = np.arange(-reach, reach + 1)
    knots = spec.knots()
    tg, wg = _gauss((p + spec.m) // 2 + 2)
    W = np.zeros((len(offsets), len(edges) - 1, len(s), p + 1))
    for isub, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        xis = lo + (hi - lo) * s
        for i, d in enumerate(offsets):
            for js, xi in enumerate(xis):
                cuts = d + xi - knots
                cuts = cuts[(cuts > 0) & (cuts < 1)]
                br = np.concatenate([[0.0], np.sort(cuts), [1.0]])
                for a0, a1 in zip(br[:-1], br[1:]):
                    if a1 <= a0:
                        continue
                    eta = a0 + (a1 - a0) * tg
                    kv = spec(d + xi - eta)
                    phi = basis.tabulate(eta[:, None])[0]
                    W[i, isub, js] += (a1 - a0) * np.einsum("q,q,qa->a", wg, kv, phi)
    return bps, s, offsets, W


def convolve(uh, spec, mirror=None):
    """Filtered field K_h * u_h as an exact piecewise polynomial.

    ``uh`` is a DiscreteField on a uniform interval mesh; the kernel is
    scaled by the mesh size.
    """
    mesh = uh.mesh
    if mesh.dim != 1:
        raise UnsupportedMeshError("SIAC filtering is implemented for 1D meshes only")
    if not mesh.is_uniform():
        raise UnsupportedMeshError("SIAC filtering needs a uniform mesh")
    h = float(mesh.h[0])
    if spec.scale is not None and not math.isclose(spec.scale, h, rel_tol=1e-10):
        raise UnsupportedMeshError("kernel scaling must equal the mesh size")
    mirror = mirror or MirrorExtension()
    p = uh.space.p
    bps, s, offsets, W = convolution_stencil(spec, p)
    reach = int(offsets.max())
    n = mesh.n_cells
    Uext = mirror.extend(uh.local, reach)
    deg = p + spec.m + 1
    samples = np.zeros((n, W.shape[1], len(s)))
    for i, d in enumerate(offsets):
        src = Uext[reach - d : reach - d + n]  # cells j - d
        samples += np.einsum("ja,usa->jus", src, W[i])
    V = np.vander(s, deg + 1, increasing=True)
    coef = np.linalg.solve(V, samples.reshape(-1, len(s)).T).T
    return SubdividedPolyField(mesh, bps, coef.reshape(n, W.shape[1], deg + 1), smoothness=spec.m)
