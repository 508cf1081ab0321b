import numpy as np
import pytest
import scipy.sparse as sp
import sympy as sy

from orthopost.ipdg import (
    DiffusionSpec,
    LinearSolver,
    PenaltySpec,
    apply_form,
    assemble_load,
    assemble_matrix,
    form_value,
)
from orthopost.mesh import IntervalMesh, structured_square, uniform_interval
from orthopost.space import DiscreteField, PolySpace, interpolate

X = sy.Symbol("x")


def sympy_sipg_1d(vertices, p, c, hyper, f=None, g=(0, 0)):
    """Textbook SIPG on a 1D DG space with exact rational arithmetic.

    Written from the vector-jump form [v] = v^- n^- + v^+ n^+ and the
    average {v'} (single trace on the boundary), independent of the
    package's facet bookkeeping.
    """
    verts = [sy.Rational(v) for v in vertices]
    n = len(verts) - 1
    basis = []  # (cell, expression)
    for k in range(n):
        a, b = verts[k], verts[k + 1]
        nodes = [a + (b - a) * sy.Rational(i, p) for i in range(p + 1)]
        for i in range(p + 1):
            li = sy.prod([(X - nodes[j]) / (nodes[i] - nodes[j]) for j in range(p + 1) if j != i])
            basis.append((k, sy.expand(li)))
    N = len(basis)
    h = [verts[k + 1] - verts[k] for k in range(n)]
    A = sy.zeros(N, N)
    rhs = sy.zeros(N, 1)
    for i, (ki, phi) in enumerate(basis):
        for j, (kj, psi) in enumerate(basis):
            if ki == kj:
                A[i, j] += sy.integrate(sy.diff(phi, X) * sy.diff(psi, X), (X, verts[ki], verts[ki + 1]))
    # facets: points x_0..x_n; cells left (k-1) and right (k)
    for e in range(n + 1):
        xe = verts[e]
        left, right = e - 1, e
        if e == 0:
            he, sides = h[0], [(right, -1)]
        elif e == n:
            he, sides = h[-1], [(left, 1)]
        else:
            he, sides = (h[left] + h[right]) / 2, [(left, 1), (right, -1)]
        sigma = c * p**2 / (he**2 if hyper else he)

        def jump(fn, cell):
            return sum(nrm * fn.subs(X, xe) for (cc, nrm) in sides if cc == cell)

        def avg(fn, cell):
            share = sy.Rational(1, len(sides))
            return sum(share * sy.diff(fn, X).subs(X, xe) for (cc, nrm) in sides if cc == cell)

        for i, (ki, phi) in enumerate(basis):
            for j, (kj, psi) in enumerate(basis):
                A[i, j] += (
                    -jump(phi, ki) * avg(psi, kj) - jump(psi, kj) * avg(phi, ki) + sigma * jump(phi, ki) * jump(psi, kj)
                )
            if len(sides) == 1:
                gval = sy.Rational(g[0] if e == 0 else g[1])
                gj = gval * sides[0][1]  # boundary data as a jump vector
                rhs[i] += -gj * avg(phi, ki) + sigma * gj * jump(phi, ki)
    if f is not None:
        for i, (ki, phi) in enumerate(basis):
            rhs[i] += sy.integrate(f * phi, (X, verts[ki], verts[ki + 1]))
    return np.array(A.evalf(30).tolist(), dtype=float), np.array(rhs.evalf(30).tolist(), dtype=float)[:, 0]


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("hyper", [False, True])
def test_matrix_matches_symbolic_assembly(p, hyper):
    verts = ["0", "1/5", "1/2", "1"]
    A_ref, _ = sympy_sipg_1d(verts, p, 10, hyper)
    mesh = IntervalMesh([0, 0.2, 0.5, 1.0])
    V = PolySpace(mesh, p)
    A = assemble_matrix(V, DiffusionSpec.identity(1), PenaltySpec("hyper" if hyper else "standard"))
    assert np.allclose(A.toarray(), A_ref, rtol=1e-12, atol=1e-10)


def test_load_matches_symbolic_assembly():
    verts = ["0", "1/4", "1/2", "1"]
    f = 3 * X**2 - X + 1
    _, b_ref = sympy_sipg_1d(verts, 2, 10, False, f=f, g=(2, -1))
    mesh = IntervalMesh([0, 0.25, 0.5, 1.0])
    V = PolySpace(mesh, 2)
    fn = sy.lambdify(X, f, "numpy")
    b = assemble_load(
        V,
        lambda x: fn(x[..., 0]),
        lambda x: np.where(x[..., 0] < 0.5, 2.0, -1.0),
        DiffusionSpec.identity(1),
        PenaltySpec(),
    )
    assert np.allclose(b, b_ref, rtol=1e-12, atol=1e-12)


def test_matrix_symmetric_2d():
    m = structured_square(3, jitter=0.2, seed=5)
    D = DiffusionSpec.scalar(lambda x: 1 + x[..., 0] ** 2, lambda x: np.stack([2 * x[..., 0], 0 * x[..., 0]], -1))
    A = assemble_matrix(PolySpace(m, 2), D, PenaltySpec())
    assert abs(A - A.T).max() < 1e-12 * abs(A).max()


def test_continuous_matrix_is_restriction_of_dg():
    # interior jumps of continuous functions vanish, so A_cg = P^T A_dg P
    mesh = structured_square(2, jitter=0.1)
    D, pen = DiffusionSpec.identity(2), PenaltySpec()
    cg, dg = PolySpace(mesh, 2, True), PolySpace(mesh, 2)
    P = sp.coo_matrix(
        (np.ones(dg.ndofs), (dg.cell_dofs.ravel(), cg.cell_dofs.ravel())), shape=(dg.ndofs, cg.ndofs)
    ).tocsr()
    A_cg = assemble_matrix(cg, D, pen)
    A_dg = assemble_matrix(dg, D, pen)
    assert abs(A_cg - P.T @ A_dg @ P).max() < 1e-10


@pytest.mark.parametrize("continuous", [False, True])
def test_linear_solution_reproduced_exactly_2d(continuous):
    # the scheme is consistent, so a linear exact solution is recovered
    mesh = structured_square(3, jitter=0.2, seed=7)
    V = PolySpace(mesh, 1, continuous)
    D, pen = DiffusionSpec.identity(2), PenaltySpec()

    def u(x):
        return 1 + 2 * x[..., 0] - 3 * x[..., 1]

    A = assemble_matrix(V, D, pen)
    b = assemble_load(V, lambda x: np.zeros(x.shape[:-1]), u, D, pen)
    uh = DiscreteField(V, LinearSolver(A).solve(b))
    assert np.allclose(uh.coefficients, interpolate(u, V).coefficients, atol=1e-11)


def test_quadratic_solution_exact_1d():
    mesh = uniform_interval(0, 1, 5)
    V = PolySpace(mesh, 2, True)
    D, pen = DiffusionSpec.identity(1), PenaltySpec()
    A = assemble_matrix(V, D, pen)
    b = assemble_load(V, lambda x: 2 + 0 * x[..., 0], lambda x: 0 * x[..., 0], D, pen)
    uh = DiscreteField(V, LinearSolver(A).solve(b))
    ref = interpolate(lambda x: x[..., 0] * (1 - x[..., 0]), V)
    assert np.allclose(uh.coefficients, ref.coefficients, atol=1e-12)


def test_boundary_data_only_touches_boundary_cells():
    mesh = structured_square(4)
    V = PolySpace(mesh, 1)
    b = assemble_load(
        V, lambda x: np.zeros(x.shape[:-1]), lambda x: 1 + x[..., 0], DiffusionSpec.identity(2), PenaltySpec()
    )
    f = mesh.facets
    touching = np.zeros(mesh.n_cells, bool)
    touching[f.minus[f.boundary]] = True
    nz = np.abs(b[V.cell_dofs]).max(axis=1) > 0
    assert np.all(nz <= touching) and nz.any()


def test_apply_form_agrees_with_matrix():
    mesh = structured_square(3, jitter=0.2)
    V = PolySpace(mesh, 2)
    D = DiffusionSpec.scalar(lambda x: 2 + x[..., 1], lambda x: np.stack([0 * x[..., 0], 1 + 0 * x[..., 0]], -1))
    pen = PenaltySpec("hyper", 7.0)
    A = assemble_matrix(V, D, pen)
    x = np.random.default_rng(1).normal(size=V.ndofs)
    w = DiscreteField(V, x)
    assert np.allclose(apply_form(w, V, D, pen), A @ x, rtol=1e-12, atol=1e-10)
    y = np.random.default_rng(2).normal(size=V.ndofs)
    assert form_value(w, DiscreteField(V, y), D, pen, 2) == pytest.approx(y @ A @ x, rel=1e-11)


def test_penalty_spec_validation():
    with pytest.raises(ValueError):
        PenaltySpec("strong")
    with pytest.raises(ValueError):
        PenaltySpec(c=0)
    assert PenaltySpec().sigma(2, 0.1) == pytest.approx(400.0)
    assert PenaltySpec("hyper").sigma(1, 0.1) == pytest.approx(1000.0)


def test_iterative_fallback_matches_direct():
    mesh = structured_square(4, jitter=0.1)
    V = PolySpace(mesh, 1)
    A = assemble_matrix(V, DiffusionSpec.identity(2), PenaltySpec())
    b = np.random.default_rng(3).normal(size=V.ndofs)
    x_direct = LinearSolver(A).solve(b)
    x_cg = LinearSolver(A, direct_limit=0, tol=1e-13).solve(b)
    assert np.allclose(x_cg, x_direct, rtol=1e-8, atol=1e-10)


def test_diffusion_must_be_spd():
    D = DiffusionSpec.scalar(lambda x: x[..., 0] - 0.5, dim=2)
    with pytest.raises(ValueError):
        D.check_spd(np.array([[0.1, 0.1]]))


def test_divergence_fallback_matches_analytic():
    D = DiffusionSpec.scalar(lambda x: np.sum(x**2, -1) + 0.5, dim=2)
    x = np.array([[0.3, 0.7]])
    assert np.allclose(D.divergence(x), 2 * x, atol=1e-6)
