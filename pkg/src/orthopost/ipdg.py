"""Symmetric interior-penalty assembly, weak Dirichlet load and solver.

The bilinear form is

    A_h(u, v) = sum_K int D grad u . grad v
                - int_E [v] . {D grad u} - int_E [u] . {D grad v}
                + int_E sigma_e [u] . [v]

over interior and boundary facets, with single-sided traces on the
boundary.  ``apply_form`` evaluates A_h(w, phi_i) for any field ``w``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .space import cell_rule, facet_quadrature, traces

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class PenaltySpec:
    """sigma_e = c p^2 / h_e (``standard``) or c p^2 / h_e^2 (``hyper``)."""

    mode: str = "standard"
    c: float = 10.0

    def __post_init__(self):
        if self.mode not in ("standard", "hyper"):
            raise ValueError(f"unknown penalty mode {self.mode!r}")
        if not self.c > 0:
            raise ValueError("penalty constant must be positive")

    def sigma(self, p, h_e):
        power = 1 if self.mode == "standard" else 2
        return self.c * p**2 / np.asarray(h_e) ** power


@dataclass
class DiffusionSpec:
    """Diffusion tensor D(x) with optional divergence.

    ``tensor(x)`` maps points (..., dim) to (..., dim, dim).  ``div(x)``
    returns the row-divergence (sum_i d_i D_ij)_j; when missing it is
    computed by central differences.
    """

    tensor: callable
    div: callable = None
    dim: int = 1
    degree: int = 2
    name: str = field(default="D")

    @classmethod
    def identity(cls, dim):
        def tensor(x):
            return np.broadcast_to(np.eye(dim), x.shape[:-1] + (dim, dim))

        return cls(tensor, lambda x: np.zeros(x.shape), dim, degree=0, name="identity")

    @classmethod
    def scalar(cls, d, grad_d=None, dim=2, degree=2):
        """D = d(x) I with gradient ``grad_d`` (the divergence of D)."""

        def tensor(x):
            return d(x)[..., None, None] * np.eye(dim)

        return cls(tensor, grad_d, dim, degree)

    def __call__(self, x):
        return self.tensor(x)

    def divergence(self, x, h=None):
        if self.div is not None:
            return self.div(x)
        step = 1e-6 if h is None else 1e-6 * h
        out = np.zeros(x.shape)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = step
            dD = (self.tensor(x + e) - self.tensor(x - e)) / (2 * step)
            out += dD[..., i, :]
        return out

    def check_spd(self, x):
        """Raise if D is not symmetric positive definite at sample points."""
        M = self.tensor(np.asarray(x).reshape(-1, self.dim))
        if not np.allclose(M, np.swapaxes(M, -1, -2)):
            raise ValueError("diffusion tensor is not symmetric")
        if np.linalg.eigvalsh(M).min() <= 0:
            raise ValueError("diffusion tensor is not positive definite")


def _scatter(rows, cols, vals, n):
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()


def _cell_quad_degree(space, D, extra_degree=0):
    return 2 * space.p + max(D.degree, 2) + extra_degree


def assemble_matrix(space, D, penalty):
    """Sparse matrix of the interior-penalty form on ``space``."""
    mesh = space.mesh
    cells = np.arange(mesh.n_cells)
    xi, w = cell_rule(mesh, _cell_quad_degree(space, D))
    x = mesh.to_physical(cells, xi)
    Dx = D(x)
    D.check_spd(x[:, :1])
    _, G = space.tabulate(cells, xi, order=1)
    W = w[None, :] * np.abs(mesh.det)[:, None]
    DG = np.einsum("cqij,cqaj->cqai", Dx, G)
    Aloc = np.einsum("cq,cqai,cqbi->cab", W, G, DG)
    dofs = space.cell_dofs
    A = _scatter(np.repeat(dofs[:, :, None], dofs.shape[1], 2), np.repeat(dofs[:, None, :], dofs.shape[1], 1), Aloc, space.ndofs)
    return A + _facet_matrix(space, D, penalty)


def _facet_basis(space, D, fq, idx, side):
    f = fq.facets
    cells = f.minus[idx] if side == "minus" else f.plus[idx]
    xi = fq.xi_minus[idx] if side == "minus" else fq.xi_plus[idx]
    phi, G = space.tabulate(cells, xi, order=1)
    Dx = D(fq.points[idx])
    flux = np.einsum("fqij,fqaj,fi->fqa", Dx, G, f.normal[idx])
    return phi, flux, space.cell_dofs[cells]


def _facet_matrix(space, D, penalty):
    mesh = space.mesh
    fq = facet_quadrature(mesh, 2 * space.p + max(D.degree, 1) + 1)
    f = fq.facets
    n = space.ndofs
    A = sp.csr_matrix((n, n))
    sigma = penalty.sigma(space.p, f.h)
    for kind in ("interior", "boundary"):
        idx = np.flatnonzero(f.interior if kind == "interior" else f.boundary)
        if len(idx) == 0:
            continue
        phm, flm, dm = _facet_basis(space, D, fq, idx, "minus")
        if kind == "interior":
            php, flp, dp = _facet_basis(space, D, fq, idx, "plus")
            J = np.concatenate([phm, -php], axis=2)
            F = 0.5 * np.concatenate([flm, flp], axis=2)
            dofs = np.concatenate([dm, dp], axis=1)
        else:
            J, F, dofs = phm, flm, dm
        W = fq.weights[idx]
        s = sigma[idx][:, None]
        loc = (
            -np.einsum("fq,fqa,fqb->fab", W, J, F)
            - np.einsum("fq,fqa,fqb->fab", W, F, J)
            + np.einsum("fq,fqa,fqb->fab", W * s, J, J)
        )
        k = dofs.shape[1]
        A = A + _scatter(np.repeat(dofs[:, :, None], k, 2), np.repeat(dofs[:, None, :], k, 1), loc, n)
    return A


def assemble_load(space, f, g, D, penalty, f_degree=6):
    """int f v + weak Dirichlet terms -int_Eb g n.D grad v + int_Eb sigma g v.

    ``f`` and ``g`` take physical points (..., dim); either may be None.
    """
    mesh = space.mesh
    b = np.zeros(space.ndofs)
    if f is not None:
        cells = np.arange(mesh.n_cells)
        xi, w = cell_rule(mesh, space.p + f_degree)
        x = mesh.to_physical(cells, xi)
        (phi,) = space.tabulate(cells, xi, order=0)
        W = w[None, :] * np.abs(mesh.det)[:, None]
        loc = np.einsum("cq,cq,cqa->ca", W, f(x), phi)
        np.add.at(b, space.cell_dofs, loc)
    if g is not None:
        fq = facet_quadrature(mesh, 2 * space.p + f_degree)
        fc = fq.facets
        idx = np.flatnonzero(fc.boundary)
        phi, flux, dofs = _facet_basis(space, D, fq, idx, "minus")
        gx = g(fq.points[idx])
        sigma = penalty.sigma(space.p, fc.h[idx])[:, None]
        W = fq.weights[idx]
        loc = np.einsum("fq,fqa->fa", W * gx, sigma[..., None] * phi - flux)
        np.add.at(b, dofs, loc)
    return b


def apply_form(w, space, D, penalty, extra_degree=2):
    """Vector with entries A_h(w, phi_i) for an arbitrary field ``w``.

    Cell integrals honour the field's internal breakpoints so piecewise
    smooth fields are integrated exactly up to the quadrature degree.
    """
    mesh = space.mesh
    b = np.zeros(space.ndofs)
    cells = np.arange(mesh.n_cells)
    deg = w.degree + space.p + max(D.degree, 1) + extra_degree
    xi, wq = cell_rule(mesh, deg, w.breakpoints)
    x = mesh.to_physical(cells, xi)
    _, gw = w.evaluate(cells, xi, order=1)
    _, G = space.tabulate(cells, xi, order=1)
    W = wq[None, :] * np.abs(mesh.det)[:, None]
    flux = np.einsum("cqij,cqj->cqi", D(x), gw)
    np.add.at(b, space.cell_dofs, np.einsum("cq,cqi,cqai->ca", W, flux, G))

    fq = facet_quadrature(mesh, deg)
    f = fq.facets
    sigma = penalty.sigma(space.p, f.h)
    for kind in ("interior", "boundary"):
        idx = np.flatnonzero(f.interior if kind == "interior" else f.boundary)
        if len(idx) == 0:
            continue
        n = f.normal[idx]
        Dx = D(fq.points[idx])
        wm = w.evaluate(f.minus[idx], fq.xi_minus[idx], order=1, side=1)
        phm, flm, dm = _facet_basis(space, D, fq, idx, "minus")
        fw_m = np.einsum("fqij,fqj,fi->fq", Dx, wm[1], n)
        if kind == "interior":
            wp = w.evaluate(f.plus[idx], fq.xi_plus[idx], order=1, side=1)
            fw_p = np.einsum("fqij,fqj,fi->fq", Dx, wp[1], n)
            jw = wm[0] - wp[0]
            avg_w = 0.5 * (fw_m + fw_p)
            php, flp, dp = _facet_basis(space, D, fq, idx, "plus")
            J = np.concatenate([phm, -php], axis=2)
            F = 0.5 * np.concatenate([flm, flp], axis=2)
            dofs = np.concatenate([dm, dp], axis=1)
        else:
            jw, avg_w = wm[0], fw_m
            J, F, dofs = phm, flm, dm
        W = fq.weights[idx]
        s = sigma[idx][:, None]
        loc = np.einsum("fq,fqa->fa", W * avg_w, -J) + np.einsum("fq,fqa->fa", W * jw, s[..., None] * J - F)
        np.add.at(b, dofs, loc)
    return b


def form_value(u, v, D, penalty, p, extra_degree=4):
    """A_h(u, v) for two arbitrary fields on the same mesh."""
    mesh = u.mesh
    cells = np.arange(mesh.n_cells)
    deg = u.degree + v.degree + max(D.degree, 1) + extra_degree
    bps = np.union1d(u.breakpoints, v.breakpoints)
    xi, wq = cell_rule(mesh, deg, bps)
    x = mesh.to_physical(cells, xi)
    _, gu = u.evaluate(cells, xi, order=1)
    _, gv = v.evaluate(cells, xi, order=1)
    W = wq[None, :] * np.abs(mesh.det)[:, None]
    total = np.sum(W * np.einsum("cqi,cqij,cqj->cq", gv, D(x), gu))

    fq = facet_quadrature(mesh, deg)
    f = fq.facets
    Dx = D(fq.points)
    um, up = traces(u, fq, order=1)
    vm, vp = traces(v, fq, order=1)
    inner = f.interior[:, None]
    n = f.normal

    def jump_avg(m, pl):
        fm = np.einsum("fqij,fqj,fi->fq", Dx, m[1], n)
        fp = np.einsum("fqij,fqj,fi->fq", Dx, pl[1], n)
        return np.where(inner, m[0] - pl[0], m[0]), np.where(inner, 0.5 * (fm + fp), fm)

    ju, au = jump_avg(um, up)
    jv, av = jump_avg(vm, vp)
    sigma = penalty.sigma(p, f.h)[:, None]
    total += np.sum(fq.weights * (-jv * au - ju * av + sigma * ju * jv))
    return float(total)


class LinearSolver:
    """Factorise once, solve many right-hand sides.

    Direct sparse LU up to ``direct_limit`` unknowns, Jacobi-preconditioned
    CG beyond that.
    """

    def __init__(self, A, tol=1e-12, direct_limit=200_000, maxiter=None):
        self.A = sp.csc_matrix(A)
        self.tol = tol
        self.maxiter = maxiter or 20 * A.shape[0]
        self.direct = A.shape[0] <= direct_limit
        if self.direct:
            try:
                self._lu = spla.splu(self.A)
            except RuntimeError as exc:
                raise SolverError(f"factorisation failed: {exc}") from exc

    def solve(self, b):
        b = np.asarray(b, float)
        if not np.any(b):
            return np.zeros_like(b)
        if self.direct:
            x = self._lu.solve(b)
            if not np.all(np.isfinite(x)):
                raise SolverError("singular matrix")
            return x
        M = sp.diags(1.0 / self.A.diagonal())
        x, info = spla.cg(self.A, b, rtol=self.tol, maxiter=self.maxiter, M=M)
        res = np.linalg.norm(self.A @ x - b) / np.linalg.norm(b)
        if info != 0:
            raise SolverError(f"CG did not converge (relative residual {res:.2e})", res)
        return x

    def residual(self, x, b):
        return float(np.linalg.norm(self.A @ x - b) / max(np.linalg.norm(b), 1e-300))


def solve(A, b, tol=1e-12):
    """Solve A x = b; returns (x, relative residual)."""
    solver = LinearSolver(A, tol)
    x = solver.solve(b)
    return x, solver.residual(x, b)


def write_matrix(A, path):
    A = sp.coo_matrix(A)
    with open(path, "w") as fh:
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{i} {j} {v:.17g}\n")
