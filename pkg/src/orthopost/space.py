"""Polynomial spaces, field representations and their evaluation.

Every field kind implements ``evaluate(cells, xi, order)`` returning a list
``[values, gradients, hessians][:order + 1]`` with shapes (nc, nq),
(nc, nq, dim) and (nc, nq, dim, dim).  ``xi`` is either a shared set of
reference points (nq, dim) or per-cell points (nc, nq, dim).  Derivatives
are always with respect to physical coordinates.
"""

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from .quadrature import composite_interval, gauss_interval, gauss_triangle, quadrature


def _exponents(dim, p):
    if dim == 1:
        return np.arange(p + 1)[:, None]
    return np.array([(a, b) for b in range(p + 1) for a in range(p + 1 - b)])


def monomials(x, exps, order=0):
    """Monomials x^e and their derivatives at points ``x`` (..., dim).

    Returns arrays (..., nmono), (..., nmono, dim), (..., nmono, dim, dim).
    """
    x = np.asarray(x, float)
    dim = x.shape[-1]
    pmax = int(exps.max()) if len(exps) else 0
    # powers[k][..., d] = x_d^k, with zero for negative k
    powers = [np.ones_like(x)]
    for _ in range(pmax):
        powers.append(powers[-1] * x)

    def pw(k, d):
        if k < 0:
            return np.zeros(x.shape[:-1])
        return powers[k][..., d]

    out = []
    val = np.ones(x.shape[:-1] + (len(exps),))
    for m, e in enumerate(exps):
        for d in range(dim):
            val[..., m] *= pw(e[d], d)
    out.append(val)
    if order >= 1:
        grad = np.zeros(x.shape[:-1] + (len(exps), dim))
        for m, e in enumerate(exps):
            for d in range(dim):
                term = np.full(x.shape[:-1], float(e[d]))
                for k in range(dim):
                    term = term * (pw(e[k] - 1, k) if k == d else pw(e[k], k))
                grad[..., m, d] = term
        out.append(grad)
    if order >= 2:
        hess = np.zeros(x.shape[:-1] + (len(exps), dim, dim))
        for m, e in enumerate(exps):
            for d1, d2 in product(range(dim), repeat=2):
                if d1 == d2:
                    c = e[d1] * (e[d1] - 1)
                    term = np.full(x.shape[:-1], float(c))
                    for k in range(dim):
                        term = term * (pw(e[k] - 2, k) if k == d1 else pw(e[k], k))
                else:
                    c = e[d1] * e[d2]
                    term = np.full(x.shape[:-1], float(c))
                    for k in range(dim):
                        dk = 1 if k in (d1, d2) else 0
                        term = term * pw(e[k] - dk, k)
                hess[..., m, d1, d2] = term
        out.append(hess)
    return out


class LagrangeBasis:
    """Lagrange basis of P_p on the reference cell, equispaced nodes."""

    def __init__(self, dim, p):
        if p < 1 or p > 6:
            raise ValueError(f"unsupported polynomial degree {p}")
        self.dim, self.p = dim, p
        if dim == 1:
            self.nodes = (np.arange(p + 1) / p)[:, None]
        else:
            self.nodes = np.array([(i / p, j / p) for j in range(p + 1) for i in range(p + 1 - j)])
        self.exps = _exponents(dim, p)
        V = monomials(self.nodes, self.exps)[0]
        self.coef = np.linalg.inv(V)  # (nmono, nloc)

    def __len__(self):
        return len(self.nodes)

    def tabulate(self, xi, order=0):
        mono = monomials(xi, self.exps, order)
        out = [mono[0] @ self.coef]
        if order >= 1:
            out.append(np.einsum("...mi,ma->...ai", mono[1], self.coef))
        if order >= 2:
            out.append(np.einsum("...mij,ma->...aij", mono[2], self.coef))
        return out


class PolySpace:
    """Piecewise P_p on a mesh, either discontinuous or globally continuous.

    The continuous variant identifies Lagrange nodes by position and needs a
    conforming mesh.
    """

    def __init__(self, mesh, p, continuous=False):
        if mesh.n_cells == 0:
            raise ValueError("empty mesh")
        self.mesh, self.p, self.continuous = mesh, int(p), bool(continuous)
        self.basis = LagrangeBasis(mesh.dim, self.p)
        nloc = len(self.basis)
        if not continuous:
            self.cell_dofs = np.arange(mesh.n_cells * nloc).reshape(mesh.n_cells, nloc)
        else:
            if mesh.has_hanging:
                raise ValueError("continuous space needs a conforming mesh")
            x = self.node_points.reshape(-1, mesh.dim)
            scale = 1e-9 * mesh.h.min()
            key = np.round(x / scale).astype(np.int64)
            _, inverse = np.unique(key, axis=0, return_inverse=True)
            # renumber in order of first appearance for a banded-ish layout
            _, first = np.unique(inverse, return_index=True)
            rank = np.empty_like(first)
            rank[np.argsort(first)] = np.arange(len(first))
            self.cell_dofs = rank[inverse.ravel()].reshape(mesh.n_cells, nloc)
        self.ndofs = int(self.cell_dofs.max()) + 1

    def __repr__(self):
        kind = "CG" if self.continuous else "DG"
        return f"PolySpace({kind}, p={self.p}, ndofs={self.ndofs})"

    @property
    def dim(self):
        return self.mesh.dim

    @cached_property
    def node_points(self):
        cells = np.arange(self.mesh.n_cells)
        return self.mesh.to_physical(cells, self.basis.nodes)

    def tabulate(self, cells, xi, order=1):
        """Basis values and physical derivatives on ``cells``.

        Returns (nc, nq, nloc), (nc, nq, nloc, dim), (nc, nq, nloc, dim, dim).
        """
        tab = self.basis.tabulate(xi, order)
        nc = len(cells)
        vals = tab[0] if tab[0].ndim == 3 else np.broadcast_to(tab[0], (nc,) + tab[0].shape)
        out = [vals]
        Jinv = self.mesh.jacobian_inv[cells]
        if order >= 1:
            g = tab[1]
            if g.ndim == 3:
                out.append(np.einsum("cji,qaj->cqai", Jinv, g))
            else:
                out.append(np.einsum("cji,cqaj->cqai", Jinv, g))
        if order >= 2:
            H = tab[2]
            if H.ndim == 4:
                out.append(np.einsum("cki,qakl,clj->cqaij", Jinv, H, Jinv))
            else:
                out.append(np.einsum("cki,cqakl,clj->cqaij", Jinv, H, Jinv))
        return out


class Field:
    """Base class of everything that can be evaluated cell-wise."""

    mesh = None
    degree = 0
    breakpoints = np.zeros(0)

    def evaluate(self, cells, xi, order=0, side=1):
        raise NotImplementedError

    def __call__(self, x):
        """Point values at physical points ``x`` (n, dim) (slow path)."""
        cells, xi = self.mesh.locate(x)
        return np.array([self.evaluate(np.array([c]), p[None, :])[0][0, 0] for c, p in zip(cells, xi)])

    def __add__(self, other):
        return CompositeField([(1.0, self), (1.0, other)])

    def __sub__(self, other):
        return CompositeField([(1.0, self), (-1.0, other)])

    def __rmul__(self, alpha):
        return CompositeField([(float(alpha), self)])


class DiscreteField(Field):
    """Coefficient vector over a :class:`PolySpace`."""

    def __init__(self, space, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.ndofs,):
            raise ValueError(f"expected {space.ndofs} coefficients, got {coefficients.shape}")
        self.space, self.coefficients = space, coefficients
        self.mesh, self.degree = space.mesh, space.p

    def __repr__(self):
        return f"DiscreteField({self.space!r})"

    @property
    def local(self):
        """Local coefficients (ncells, nloc)."""
        return self.coefficients[self.space.cell_dofs]

    def evaluate(self, cells, xi, order=0, side=1):
        cells = np.asarray(cells)
        coef = self.local[cells]
        tab = self.space.basis.tabulate(xi, order)
        shared = xi.ndim == 2
        out = [np.einsum("ca,qa->cq" if shared else "ca,cqa->cq", coef, tab[0])]
        Jinv = self.mesh.jacobian_inv[cells]
        if order >= 1:
            g = np.einsum("ca,qaj->cqj" if shared else "ca,cqaj->cqj", coef, tab[1])
            out.append(np.einsum("cji,cqj->cqi", Jinv, g))
        if order >= 2:
            H = np.einsum("ca,qakl->cqkl" if shared else "ca,cqakl->cqkl", coef, tab[2])
            out.append(np.einsum("cki,cqkl,clj->cqij", Jinv, H, Jinv))
        return out


class SubdividedPolyField(Field):
    """1D field that is polynomial on sub-cells of every mesh cell.

    ``breakpoints`` are interior reference coordinates in (0, 1) shared by
    all cells; ``coefficients`` has shape (ncells, nsub, degree + 1) with
    monomial coefficients in the sub-cell variable s in [0, 1].
    ``smoothness`` records the continuity class C^m across breakpoints.
    """

    def __init__(self, mesh, breakpoints, coefficients, smoothness=0):
        if mesh.dim != 1:
            raise ValueError("sub-divided fields are one-dimensional")
        self.mesh = mesh
        self.breakpoints = np.sort(np.asarray(breakpoints, float))
        self.coefficients = np.asarray(coefficients, float)
        nsub = len(self.breakpoints) + 1
        if self.coefficients.shape[:2] != (mesh.n_cells, nsub):
            raise ValueError("coefficient array does not match mesh / sub-partition")
        self.degree = self.coefficients.shape[2] - 1
        self.smoothness = smoothness
        self.edges = np.concatenate([[0.0], self.breakpoints, [1.0]])

    def __repr__(self):
        return f"SubdividedPolyField(degree={self.degree}, nsub={len(self.edges) - 1}, C^{self.smoothness})"

    def evaluate(self, cells, xi, order=0, side=1):
        cells = np.asarray(cells)
        t = xi[..., 0]
        if t.ndim == 1:
            t = np.broadcast_to(t, (len(cells), len(t)))
        sub = np.searchsorted(self.breakpoints, t, side="right" if side > 0 else "left")
        lo, hi = self.edges[sub], self.edges[sub + 1]
        s = (t - lo) / (hi - lo)
        coef = self.coefficients[cells[:, None], sub]  # (nc, nq, deg+1)
        scale = 1.0 / (self.mesh.jacobian[cells, 0, 0][:, None] * (hi - lo))
        out = []
        c = coef
        for k in range(order + 1):
            val = np.zeros(t.shape)
            for j in range(c.shape[-1] - 1, -1, -1):
                val = val * s + c[..., j]
            val = val * scale**k
            out.append(val if k == 0 else val.reshape(val.shape + (1,) * k))
            n = c.shape[-1]
            if n > 1:
                c = c[..., 1:] * np.arange(1, n)
            else:
                c = np.zeros_like(c)
        return out


class AnalyticField(Field):
    """Wraps a closed-form function and its gradient (and optionally Hessian)."""

    def __init__(self, mesh, u, grad=None, hess=None, degree=8):
        self.mesh, self.u, self.grad, self.hess = mesh, u, grad, hess
        self.degree = degree

    def evaluate(self, cells, xi, order=0, side=1):
        x = self.mesh.to_physical(np.asarray(cells), xi)
        out = [self.u(x)]
        if order >= 1:
            if self.grad is None:
                raise ValueError("analytic field has no gradient")
            out.append(self.grad(x))
        if order >= 2:
            if self.hess is None:
                raise ValueError("analytic field has no Hessian")
            out.append(self.hess(x))
        return out


class CompositeField(Field):
    """Weighted sum of fields sharing one mesh."""

    def __init__(self, terms):
        flat = []
        for w, f in terms:
            if isinstance(f, CompositeField):
                flat += [(w * w2, f2) for w2, f2 in f.terms]
            else:
                flat.append((float(w), f))
        self.terms = flat
        self.mesh = flat[0][1].mesh
        if any(f.mesh is not self.mesh for _, f in flat):
            raise ValueError("composite members must share one mesh")
        self.degree = max(f.degree for _, f in flat)
        bps = [f.breakpoints for _, f in flat if len(f.breakpoints)]
        self.breakpoints = np.unique(np.concatenate(bps)) if bps else np.zeros(0)

    def __repr__(self):
        return "CompositeField(" + ", ".join(f"{w:+g}*{f!r}" for w, f in self.terms) + ")"

    def evaluate(self, cells, xi, order=0, side=1):
        out = None
        for w, f in self.terms:
            part = f.evaluate(cells, xi, order, side)
            if out is None:
                out = [w * a for a in part]
            else:
                for k in range(order + 1):
                    out[k] = out[k] + w * part[k]
        return out


def cell_rule(mesh, degree, breakpoints=()):
    """Reference points (nq, dim) and weights (nq,) for cell integration."""
    if mesh.dim == 1:
        rule = composite_interval(degree, breakpoints) if len(breakpoints) else gauss_interval(degree)
    else:
        if len(breakpoints):
            raise ValueError("sub-partitions are only supported in 1D")
        rule = gauss_triangle(degree)
    return rule.points, rule.weights


@dataclass
class FacetQuadrature:
    """Facet quadrature with reference points on both adjacent cells."""

    facets: object
    points: np.ndarray
    weights: np.ndarray
    xi_minus: np.ndarray
    xi_plus: np.ndarray


def facet_quadrature(mesh, degree):
    cache = mesh.__dict__.setdefault("_facet_quadrature", {})
    key = min(degree, 60) if mesh.dim == 2 else 0
    if key in cache:
        return cache[key]
    f = mesh.facets
    rule = quadrature("facet", key, mesh.dim)
    x = f.points(rule.points)
    w = f.length[:, None] * rule.weights[None, :]
    xm = mesh.to_reference(f.minus, x)
    xp = mesh.to_reference(np.maximum(f.plus, 0), x)
    fq = FacetQuadrature(f, x, w, xm, xp)
    cache[key] = fq
    return fq


def traces(field, fq, order=1, which=None):
    """Evaluate ``field`` on both sides of facets (subset ``which``)."""
    f = fq.facets
    idx = np.arange(len(f)) if which is None else which
    minus = field.evaluate(f.minus[idx], fq.xi_minus[idx], order, side=1)
    plus = field.evaluate(np.maximum(f.plus[idx], 0), fq.xi_plus[idx], order, side=1)
    return minus, plus


def interpolate(fn, space):
    """Nodal interpolant of ``fn`` (callable on (n, dim) points)."""
    x = space.node_points
    vals = np.asarray(fn(x.reshape(-1, space.dim)), float).reshape(x.shape[:2])
    coef = np.zeros(space.ndofs)
    coef[space.cell_dofs] = vals
    return DiscreteField(space, coef)


@dataclass
class ErrorNorms:
    L2: float
    H1: float
    dG: float
    energy: float = float("nan")
    energy_sq: float = float("nan")


def _cell_integral(mesh, field, degree, order):
    xi, w = cell_rule(mesh, degree, field.breakpoints)
    cells = np.arange(mesh.n_cells)
    vals = field.evaluate(cells, xi, order)
    return vals, w[None, :] * np.abs(mesh.det)[:, None]


def l2_norm(field, extra=6):
    mesh = field.mesh
    (v,), W = _cell_integral(mesh, field, 2 * field.degree + extra, 0)
    return float(np.sqrt(np.sum(W * v**2)))


def cellwise_grad_sq(field, extra=6):
    """Per-cell ||grad field||^2."""
    mesh = field.mesh
    (_, g), W = _cell_integral(mesh, field, 2 * field.degree + extra, 1)
    return np.sum(W * np.sum(g**2, axis=-1), axis=1)


def jump_sq(field, boundary_data=None, extra=4):
    """Sum over facets of ||h_e^{-1/2} [field]||^2.

    On the boundary the jump is (field - boundary_data) n.
    """
    mesh = field.mesh
    fq = facet_quadrature(mesh, 2 * field.degree + extra)
    f = fq.facets
    (vm,), (vp,) = traces(field, fq, order=0)
    jump = np.where(f.interior[:, None], vm - vp, vm)
    if boundary_data is not None:
        b = f.boundary
        jump[b] -= boundary_data(fq.points[b])
    return float(np.sum(fq.weights * jump**2 / f.h[:, None]))


def error_norms(u, grad_u, field, D=None, penalty=None, extra=6):
    """L2, broken H1 seminorm, dG and energy norms of ``u - field``.

    The energy norm needs the diffusion and penalty used by the scheme;
    without them it is reported as NaN. A_h is only guaranteed positive
    on the discrete space, so the signed value A_h(e, e) is kept in
    ``energy_sq`` and ``energy`` is the square root of its positive part.
    """
    mesh = field.mesh
    exact = AnalyticField(mesh, u, grad_u, degree=field.degree + extra)
    err = CompositeField([(1.0, exact), (-1.0, field)])
    L2 = l2_norm(err, extra=extra)
    H1 = float(np.sqrt(cellwise_grad_sq(err, extra=extra).sum()))
    dG = float(np.sqrt(H1**2 + jump_sq(err)))
    energy = energy_sq = float("nan")
    if D is not None and penalty is not None:
        from .ipdg import form_value

        energy_sq = float(form_value(err, err, D, penalty, p=penalty_degree(field)))
        energy = float(np.sqrt(max(energy_sq, 0.0)))
    return ErrorNorms(L2, H1, dG, energy, energy_sq)


def penalty_degree(field):
    """Polynomial degree of the underlying discrete space of a field."""
    if isinstance(field, DiscreteField):
        return field.space.p
    if isinstance(field, CompositeField):
        for _, f in field.terms:
            if isinstance(f, DiscreteField):
                return f.space.p
    return getattr(field, "space_degree", field.degree)


def dump_field(field, path, samples=5, exact=None):
    """Write ``x [y] value grad...`` lines, one block per cell (gnuplot style)."""
    mesh = field.mesh
    if mesh.dim == 1:
        xi = np.linspace(0.0, 1.0, samples)[:, None]
    else:
        pts = [(i / (samples - 1), j / (samples - 1)) for j in range(samples) for i in range(samples - j)]
        xi = np.array(pts)
    cells = np.arange(mesh.n_cells)
    x = mesh.to_physical(cells, xi)
    v, g = field.evaluate(cells, xi, order=1)
    with open(path, "w") as fh:
        for c in cells:
            for q in range(len(xi)):
                cols = list(x[c, q]) + [v[c, q]] + list(g[c, q])
                if exact is not None:
                    cols.append(float(exact(x[c, q][None, :])[0]))
                fh.write(" ".join(f"{val:.16e}" for val in cols) + "\n")
            fh.write("\n")
