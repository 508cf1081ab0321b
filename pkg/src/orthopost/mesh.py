"""Interval meshes and triangulations with red refinement.

Both mesh types are immutable; ``refine`` returns a new mesh whose
``parent`` array maps every new cell to the cell of the previous mesh it
was created from.  2D refinement splits a triangle into four similar
children through its edge midpoints.  Hanging nodes are allowed, with at
most one level of difference across any edge (enforced by closure).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Facets:
    """Integration facets of a mesh.

    ``minus``/``plus`` hold the adjacent cells (``plus == -1`` on the
    boundary), ``normal`` is the unit normal pointing out of ``minus``.
    For 2D meshes ``ends`` holds the two endpoints of each facet; on an edge
    with a hanging node the facets are the fine sub-edges and ``plus`` is
    the coarse neighbour.
    """

    minus: np.ndarray
    plus: np.ndarray
    normal: np.ndarray
    length: np.ndarray
    h: np.ndarray
    ends: np.ndarray
    hanging: np.ndarray
    vertex_ids: np.ndarray

    def __len__(self):
        return len(self.minus)

    @property
    def interior(self):
        return self.plus >= 0

    @property
    def boundary(self):
        return self.plus < 0

    def points(self, ref_points):
        """Physical points (nf, nq, dim) for facet-reference points (nq, dim-1)."""
        if self.ends.shape[1] == 1:
            return np.repeat(self.ends, len(ref_points), axis=1)
        t = np.asarray(ref_points)[:, 0]
        a, b = self.ends[:, 0, :], self.ends[:, 1, :]
        return a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]


class Mesh:
    """Common affine-cell geometry for both mesh types."""

    dim: int
    vertices: np.ndarray
    cells: np.ndarray
    parent: np.ndarray
    level: np.ndarray

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @cached_property
    def origin(self):
        return self.vertices[self.cells[:, 0]]

    @cached_property
    def jacobian(self):
        v = self.vertices[self.cells]
        cols = [v[:, k + 1] - v[:, 0] for k in range(self.dim)]
        return np.stack(cols, axis=-1)

    @cached_property
    def jacobian_inv(self):
        return np.linalg.inv(self.jacobian)

    @cached_property
    def det(self):
        return np.linalg.det(self.jacobian)

    def to_physical(self, cells, xi):
        """Map reference points to physical space.

        ``xi`` is (nq, dim) shared by all ``cells`` or (ncells, nq, dim).
        """
        J = self.jacobian[cells]
        x0 = self.origin[cells]
        if xi.ndim == 2:
            return x0[:, None, :] + np.einsum("cij,qj->cqi", J, xi)
        return x0[:, None, :] + np.einsum("cij,cqj->cqi", J, xi)

    def to_reference(self, cells, x):
        """Inverse of :meth:`to_physical` for points x of shape (ncells, nq, dim)."""
        Jinv = self.jacobian_inv[cells]
        x0 = self.origin[cells]
        return np.einsum("cij,cqj->cqi", Jinv, x - x0[:, None, :])

    def locate(self, x, tol=1e-12):
        """Cell index and reference coordinates of physical points ``x`` (n, dim)."""
        x = np.atleast_2d(np.asarray(x, float))
        cells = np.full(len(x), -1)
        xi = np.zeros_like(x)
        for k, pt in enumerate(x):
            ref = np.einsum("cij,cj->ci", self.jacobian_inv, pt - self.origin)
            inside = np.all(ref >= -tol, axis=1) & (ref.sum(axis=1) <= 1 + tol)
            if self.dim == 1:
                inside = (ref[:, 0] >= -tol) & (ref[:, 0] <= 1 + tol)
            hit = np.flatnonzero(inside)
            if len(hit) == 0:
                raise MeshError(f"point {pt} is outside the mesh")
            cells[k] = hit[0]
            xi[k] = ref[hit[0]]
        return cells, xi

    @cached_property
    def h(self):
        """Cell diameters h_K."""
        v = self.vertices[self.cells]
        if self.dim == 1:
            return np.abs(v[:, 1, 0] - v[:, 0, 0])
        e = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    @cached_property
    def volume(self):
        if self.dim == 1:
            return np.abs(self.det)
        return 0.5 * np.abs(self.det)

    @cached_property
    def inradius(self):
        if self.dim == 1:
            return 0.5 * self.h
        v = self.vertices[self.cells]
        e = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]], axis=1)
        perimeter = np.linalg.norm(e, axis=2).sum(axis=1)
        return 2.0 * self.volume / perimeter

    def shape_report(self):
        """(min h_K, max h_K, max h_K / rho_K)."""
        return float(self.h.min()), float(self.h.max()), float((self.h / self.inradius).max())

    @property
    def n_facets(self):
        return len(self.facets)

    def check_marks(self, marks):
        marks = np.asarray(marks, dtype=bool)
        if marks.shape != (self.n_cells,):
            raise MeshError(f"marks have shape {marks.shape}, mesh has {self.n_cells} cells")
        return marks

    def refine_uniform(self):
        return self.refine(np.ones(self.n_cells, dtype=bool))


class IntervalMesh(Mesh):
    dim = 1

    def __init__(self, vertices, parent=None, level=None):
        v = np.asarray(vertices, dtype=float).ravel()
        if len(v) < 2:
            raise MeshError("an interval mesh needs at least one cell")
        if np.any(np.diff(v) <= 0):
            raise MeshError("interval mesh vertices must be strictly increasing")
        self.vertices = v[:, None]
        self.vertices.flags.writeable = False
        n = len(v) - 1
        self.cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
        self.parent = np.arange(n) if parent is None else np.asarray(parent)
        self.level = np.zeros(n, dtype=int) if level is None else np.asarray(level)

    def __repr__(self):
        return f"IntervalMesh(n_cells={self.n_cells}, [{self.vertices[0, 0]}, {self.vertices[-1, 0]}])"

    @property
    def bounds(self):
        return float(self.vertices[:, 0].min()), float(self.vertices[:, 0].max())

    @property
    def has_hanging(self):
        return False

    def is_uniform(self, rtol=1e-10):
        return bool(np.ptp(self.h) <= rtol * self.h.max())

    @cached_property
    def facets(self):
        n = self.n_cells
        nv = n + 1
        minus = np.concatenate([[0], np.arange(0, n - 1), [n - 1]])
        plus = np.concatenate([[-1], np.arange(1, n), [-1]])
        normal = np.ones((nv, 1))
        normal[0, 0] = -1.0
        h = self.h
        he = np.empty(nv)
        he[0], he[-1] = h[0], h[-1]
        he[1:-1] = 0.5 * (h[:-1] + h[1:])
        ends = self.vertices[:, None, :]
        # facet order follows vertices: boundary facets are first and last
        return Facets(
            minus, plus, normal, np.ones(nv), he, ends, np.zeros(nv, dtype=bool), np.arange(nv)[:, None]
        )

    def refine(self, marks):
        marks = self.check_marks(marks)
        v = self.vertices[:, 0]
        new_v = [v[0]]
        parent, level = [], []
        for k in range(self.n_cells):
            if marks[k]:
                new_v.append(0.5 * (v[k] + v[k + 1]))
                parent += [k, k]
                level += [self.level[k] + 1] * 2
            else:
                parent.append(k)
                level.append(self.level[k])
            new_v.append(v[k + 1])
        return IntervalMesh(new_v, parent, level)


def uniform_interval(a, b, n):
    """``n`` equal cells spanning [a, b]."""
    if n < 1 or not a < b:
        raise MeshError(f"invalid interval mesh request a={a}, b={b}, n={n}")
    return IntervalMesh(np.linspace(a, b, n + 1))


_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


class TriMesh(Mesh):
    dim = 2

    def __init__(self, vertices, cells, parent=None, level=None, midpoints=None):
        vertices = np.asarray(vertices, dtype=float)
        cells = np.array(cells, dtype=int)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (N, 2) array")
        if cells.ndim != 2 or cells.shape[1] != 3 or len(cells) == 0:
            raise MeshError("cells must be a non-empty (M, 3) array")
        v = vertices[cells]
        area2 = (v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1]) - (
            v[:, 2, 0] - v[:, 0, 0]
        ) * (v[:, 1, 1] - v[:, 0, 1])
        if np.any(np.abs(area2) <= 1e-14 * np.max(np.abs(area2))):
            raise MeshError("degenerate triangle in mesh")
        flip = area2 < 0
        cells[flip] = cells[flip][:, [0, 2, 1]]
        self.vertices = vertices
        self.cells = cells
        self.vertices.flags.writeable = False
        self.cells.flags.writeable = False
        n = len(cells)
        self.parent = np.arange(n) if parent is None else np.asarray(parent)
        self.level = np.zeros(n, dtype=int) if level is None else np.asarray(level)
        self.midpoints = {} if midpoints is None else midpoints

    def __repr__(self):
        return f"TriMesh(n_cells={self.n_cells}, n_vertices={self.n_vertices})"

    @cached_property
    def _edge_table(self):
        c = self.cells
        a = np.concatenate([c[:, i] for i, _ in _LOCAL_EDGES])
        b = np.concatenate([c[:, j] for _, j in _LOCAL_EDGES])
        owner = np.tile(np.arange(self.n_cells), 3)
        key = np.minimum(a, b) * self.n_vertices + np.maximum(a, b)
        return a, b, owner, key

    @cached_property
    def facets(self):
        a, b, owner, key = self._edge_table
        order = np.argsort(key, kind="stable")
        ks = key[order]
        first = np.ones(len(ks), dtype=bool)
        first[1:] = ks[1:] != ks[:-1]
        starts = np.flatnonzero(first)
        counts = np.diff(np.append(starts, len(ks)))
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two cells")
        minus, plus, ea, eb, hanging = [], [], [], [], []
        pair = starts[counts == 2]
        i0, i1 = order[pair], order[pair + 1]
        minus.append(owner[i0])
        plus.append(owner[i1])
        ea.append(a[i0])
        eb.append(b[i0])
        hanging.append(np.zeros(len(pair), dtype=bool))

        single = order[starts[counts == 1]]
        single_key = {int(key[i]): int(i) for i in single}
        nv = self.n_vertices
        used = set()
        bm, bp, ba, bb, bh = [], [], [], [], []
        for i in single:
            if i in used:
                continue
            lo, hi = min(a[i], b[i]), max(a[i], b[i])
            mid = self.midpoints.get((int(lo), int(hi)))
            if mid is not None:
                k1 = min(lo, mid) * nv + max(lo, mid)
                k2 = min(hi, mid) * nv + max(hi, mid)
                if k1 in single_key and k2 in single_key:
                    # coarse edge i seen from the coarse cell; fine sub-edges j1, j2
                    for j in (single_key[k1], single_key[k2]):
                        used.add(j)
                        bm.append(owner[j])
                        bp.append(owner[i])
                        ba.append(a[j])
                        bb.append(b[j])
                        bh.append(True)
                    used.add(i)
                    continue
        for i in single:
            if i in used:
                continue
            bm.append(owner[i])
            bp.append(-1)
            ba.append(a[i])
            bb.append(b[i])
            bh.append(False)
        minus = np.concatenate(minus + [np.array(bm, dtype=int)])
        plus = np.concatenate(plus + [np.array(bp, dtype=int)])
        ea = np.concatenate(ea + [np.array(ba, dtype=int)])
        eb = np.concatenate(eb + [np.array(bb, dtype=int)])
        hanging = np.concatenate(hanging + [np.array(bh, dtype=bool)])

        pa, pb = self.vertices[ea], self.vertices[eb]
        d = pb - pa
        length = np.linalg.norm(d, axis=1)
        normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
        h = self.h
        he = np.where(plus >= 0, 0.5 * (h[minus] + h[np.maximum(plus, 0)]), h[minus])
        ends = np.stack([pa, pb], axis=1)
        return Facets(minus, plus, normal, length, he, ends, hanging, np.column_stack([ea, eb]))

    @property
    def has_hanging(self):
        return bool(self.facets.hanging.any())

    def closure(self, marks):
        """Extend ``marks`` so refinement keeps one level of hanging nodes."""
        marks = self.check_marks(marks).copy()
        f = self.facets
        fine, coarse = f.minus[f.hanging], f.plus[f.hanging]
        while True:
            need = coarse[marks[fine] & ~marks[coarse]]
            if len(need) == 0:
                return marks
            marks[need] = True

    def refine(self, marks):
        marks = self.closure(marks)
        verts = [tuple(v) for v in self.vertices]
        midpoints = dict(self.midpoints)
        new_cells, parent, level = [], [], []

        def mid(i, j):
            k = (min(i, j), max(i, j))
            m = midpoints.get(k)
            if m is None:
                m = len(verts)
                pi, pj = verts[i], verts[j]
                verts.append((0.5 * (pi[0] + pj[0]), 0.5 * (pi[1] + pj[1])))
                midpoints[k] = m
            return m

        for c, (i, j, k) in enumerate(self.cells):
            if not marks[c]:
                new_cells.append((i, j, k))
                parent.append(c)
                level.append(self.level[c])
                continue
            mij, mjk, mki = mid(i, j), mid(j, k), mid(k, i)
            new_cells += [(i, mij, mki), (mij, j, mjk), (mki, mjk, k), (mij, mjk, mki)]
            parent += [c] * 4
            level += [self.level[c] + 1] * 4
        return TriMesh(np.array(verts), np.array(new_cells), parent, level, midpoints)

    def boundary_vertices(self):
        f = self.facets
        return np.unique(f.vertex_ids[f.boundary])


def read_macro(path):
    """Read the ``vertices N`` / ``cells M`` macro-grid text format."""
    with open(path) as fh:
        tokens = [line.split() for line in fh if line.strip() and not line.startswith("#")]
    if tokens[0][0] != "vertices":
        raise MeshError("macro grid must start with 'vertices N'")
    nv = int(tokens[0][1])
    verts = np.array([[float(t) for t in row[:2]] for row in tokens[1 : 1 + nv]])
    head = tokens[1 + nv]
    if head[0] != "cells":
        raise MeshError("expected 'cells M' after the vertex block")
    nc = int(head[1])
    cells = np.array([[int(t) for t in row[:3]] for row in tokens[2 + nv : 2 + nv + nc]])
    return TriMesh(verts, cells)


def write_macro(mesh, path):
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"cells {mesh.n_cells}\n")
        for i, j, k in mesh.cells:
            fh.write(f"{i} {j} {k}\n")


def structured_square(n, x0=0.0, y0=0.0, size=1.0, jitter=0.0, seed=0):
    """``n`` x ``n`` squares, each cut into two triangles along alternating diagonals.

    Interior vertices are moved by a uniform random offset of at most
    ``jitter * h`` per coordinate (deterministic for a given ``seed``).
    """
    h = size / n
    xs = x0 + h * np.arange(n + 1)
    ys = y0 + h * np.arange(n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    if jitter:
        rng = np.random.default_rng(seed)
        interior = np.zeros((n + 1, n + 1), dtype=bool)
        interior[1:-1, 1:-1] = True
        interior = interior.ravel()
        verts[interior] += jitter * h * rng.uniform(-1, 1, size=(interior.sum(), 2))
    cells = []
    idx = lambda i, j: i * (n + 1) + j  # noqa: E731
    for i in range(n):
        for j in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            if (i + j) % 2 == 0:
                cells += [(a, b, c), (a, c, d)]
            else:
                cells += [(a, b, d), (b, c, d)]
    return TriMesh(verts, np.array(cells))


def lshape(n=2):
    """(-1, 1)^2 without [0, 1] x [-1, 0], squares of side 1/n cut into triangles.

    Diagonals point away from the re-entrant corner at the origin.
    """
    h = 1.0 / n
    coords = {}
    verts = []

    def vid(i, j):
        key = (i, j)
        if key not in coords:
            coords[key] = len(verts)
            verts.append((-1.0 + i * h, -1.0 + j * h))
        return coords[key]

    cells = []
    for i in range(2 * n):
        for j in range(2 * n):
            if i >= n and j < n:
                continue
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            cx, cy = -1.0 + (i + 0.5) * h, -1.0 + (j + 0.5) * h
            if cx * cy > 0:
                cells += [(a, b, d), (b, c, d)]
            else:
                cells += [(a, b, c), (a, c, d)]
    return TriMesh(np.array(verts), np.array(cells))
