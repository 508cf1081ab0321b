"""Superconvergent patch recovery of function values on triangulations.

At every vertex a polynomial of total degree 2p is fitted by least squares
to values of u_h at sample points of the surrounding cells.  On each cell
the three vertex fits are blended with the barycentric coordinates, which
gives a continuous field of degree 2p + 1 on conforming meshes.
"""

from dataclasses import dataclass

import numpy as np

from .space import Field, _exponents, monomials

_LOBATTO = (0.5 - np.sqrt(5) / 10, 0.5 + np.sqrt(5) / 10)
_REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class SPRError(RuntimeError):
    pass


def reference_samples(p):
    """Sample points on the reference triangle for degree ``p`` data."""
    if p not in (1, 2, 3):
        raise ValueError(f"patch recovery supports p in {{1, 2, 3}}, got {p}")
    pts = list(_REF_VERTICES)
    edges = [(0, 1), (1, 2), (2, 0)]
    if p == 2:
        pts += [0.5 * (_REF_VERTICES[i] + _REF_VERTICES[j]) for i, j in edges]
    if p == 3:
        for i, j in edges:
            pts += [(1 - t) * _REF_VERTICES[i] + t * _REF_VERTICES[j] for t in _LOBATTO]
        pts.append(np.array([1 / 3, 1 / 3]))
    return np.array(pts)


def vertex_patches(mesh):
    """List of cell index arrays, one per vertex."""
    flat = mesh.cells.ravel()
    owner = np.repeat(np.arange(mesh.n_cells), 3)
    order = np.argsort(flat, kind="stable")
    bounds = np.searchsorted(flat[order], np.arange(mesh.n_vertices + 1))
    return [owner[order[bounds[v] : bounds[v + 1]]] for v in range(mesh.n_vertices)]


@dataclass
class NodePatch:
    node: int
    cells: np.ndarray
    points: np.ndarray  # distinct sample points (ns, 2)
    values: np.ndarray  # u_h at the samples, averaged over the patch cells


@dataclass
class NodeFit:
    node: int
    center: np.ndarray
    radius: float
    coefficients: np.ndarray  # monomial coefficients in (x - center) / radius
    layers: int = 1


class _Sampler:
    """u_h at the reference samples of every cell, with global point ids."""

    def __init__(self, field, p):
        mesh = field.mesh
        self.xi = reference_samples(p)
        cells = np.arange(mesh.n_cells)
        self.x = mesh.to_physical(cells, self.xi)
        self.vals = field.evaluate(cells, self.xi)[0]
        scale = 1e-9 * mesh.h.min()
        key = np.round(self.x.reshape(-1, 2) / scale).astype(np.int64)
        _, ids = np.unique(key, axis=0, return_inverse=True)
        self.ids = ids.reshape(self.vals.shape)

    def patch(self, node, cells):
        ids = self.ids[cells].ravel()
        uniq, inv = np.unique(ids, return_inverse=True)
        count = np.bincount(inv)
        values = np.bincount(inv, weights=self.vals[cells].ravel()) / count
        first = np.zeros(len(uniq), dtype=int)
        first[inv[::-1]] = np.arange(len(ids))[::-1]
        points = self.x[cells].reshape(-1, 2)[first]
        return NodePatch(node, cells, points, values)


def sample_points(mesh, p, cells):
    """Distinct physical sample points of the given patch cells."""
    xi = reference_samples(p)
    x = mesh.to_physical(np.asarray(cells), xi).reshape(-1, 2)
    scale = 1e-9 * mesh.h.min()
    _, first = np.unique(np.round(x / scale).astype(np.int64), axis=0, return_index=True)
    return x[np.sort(first)]


def _second_layer(mesh, cells, patches):
    verts = np.unique(mesh.cells[cells])
    return np.unique(np.concatenate([patches[v] for v in verts]))


def fit_node_polynomial(patch, p, center, rcond=1e-10):
    """Least-squares fit of degree 2p to the patch samples.

    Returns a NodeFit, or None when the system is rank deficient.
    """
    exps = _exponents(2, 2 * p)
    d = patch.points - center
    radius = float(np.max(np.linalg.norm(d, axis=1)))
    if len(d) < len(exps) or radius == 0.0:
        return None
    M = monomials(d / radius, exps)[0]
    coef, _, rank, _ = np.linalg.lstsq(M, patch.values, rcond=rcond)
    if rank < len(exps):
        return None
    return NodeFit(patch.node, center, radius, coef)


def fit_all(field, p):
    """Fits at every vertex of the mesh of ``field``."""
    mesh = field.mesh
    sampler = _Sampler(field, p)
    patches = vertex_patches(mesh)
    fits = []
    for v, cells in enumerate(patches):
        center = mesh.vertices[v]
        fit = fit_node_polynomial(sampler.patch(v, cells), p, center)
        if fit is None:
            cells = _second_layer(mesh, cells, patches)
            fit = fit_node_polynomial(sampler.patch(v, cells), p, center)
            if fit is None:
                raise SPRError(f"rank-deficient patch fit at vertex {v} {tuple(center)} after two layers")
            fit.layers = 2
        fits.append(fit)
    return fits


class SPRField(Field):
    """u*|_K = sum_i lambda_i q_i over the three vertices of K."""

    def __init__(self, mesh, fits, p):
        self.mesh, self.p = mesh, p
        self.degree = 2 * p + 1
        self.space_degree = p
        self.exps = _exponents(2, 2 * p)
        self.centers = np.array([f.center for f in fits])
        self.radii = np.array([f.radius for f in fits])
        self.coef = np.array([f.coefficients for f in fits])
        self.layers = np.array([f.layers for f in fits])

    def __repr__(self):
        return f"SPRField(p={self.p}, degree={self.degree})"

    def node_values(self, nodes, x, order=0):
        """q at points x (nc, nq, 2) for per-cell nodes (nc,)."""
        r = self.radii[nodes][:, None, None]
        mono = monomials((x - self.centers[nodes][:, None, :]) / r, self.exps, order)
        c = self.coef[nodes]
        out = [np.einsum("cqm,cm->cq", mono[0], c)]
        if order >= 1:
            out.append(np.einsum("cqmi,cm->cqi", mono[1], c) / r)
        if order >= 2:
            out.append(np.einsum("cqmij,cm->cqij", mono[2], c) / r[..., None] ** 2)
        return out

    def evaluate(self, cells, xi, order=0, side=1):
        cells = np.asarray(cells)
        mesh = self.mesh
        x = mesh.to_physical(cells, xi)
        if xi.ndim == 2:
            xi = np.broadcast_to(xi, (len(cells),) + xi.shape)
        lam = np.stack([1.0 - xi[..., 0] - xi[..., 1], xi[..., 0], xi[..., 1]], axis=-1)
        Jinv = mesh.jacobian_inv[cells]
        glam = np.stack([-Jinv[:, 0] - Jinv[:, 1], Jinv[:, 0], Jinv[:, 1]], axis=1)  # (nc, 3, 2)
        out = [0.0, 0.0, 0.0][: order + 1]
        for k in range(3):
            q = self.node_values(mesh.cells[cells, k], x, order)
            lk = lam[..., k]
            gk = glam[:, k][:, None, :]
            out[0] = out[0] + lk * q[0]
            if order >= 1:
                out[1] = out[1] + q[0][..., None] * gk + lk[..., None] * q[1]
            if order >= 2:
                cross = gk[..., :, None] * q[1][..., None, :]
                out[2] = out[2] + cross + np.swapaxes(cross, -1, -2) + lk[..., None, None] * q[2]
        return out


def recover(field, p=None):
    """Patch recovery u* of a field on a triangulation."""
    if field.mesh.dim != 2:
        raise ValueError("patch recovery is implemented for triangulations")
    p = p if p is not None else field.degree
    return SPRField(field.mesh, fit_all(field, p), p)


def blend(fits, mesh, p):
    """Blend vertex fits into a field over ``mesh``."""
    if len(fits) != mesh.n_vertices:
        raise ValueError("need one fit per mesh vertex")
    return SPRField(mesh, fits, p)
