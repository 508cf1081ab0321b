import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthopost.ipdg import DiffusionSpec, LinearSolver, PenaltySpec, apply_form, assemble_matrix, form_value
from orthopost.mesh import structured_square, uniform_interval
from orthopost.ortho import improve, ritz_project
from orthopost.pipeline import PostSpec, solve_level
from orthopost.problems import get_problem
from orthopost.space import AnalyticField, CompositeField, DiscreteField, PolySpace, error_norms, interpolate


def setup_2d(p=2, seed=0):
    mesh = structured_square(3, jitter=0.2, seed=seed)
    V = PolySpace(mesh, p)
    D, pen = DiffusionSpec.identity(2), PenaltySpec()
    return V, D, pen, assemble_matrix(V, D, pen)


def test_ritz_of_discrete_field_is_identity():
    V, D, pen, A = setup_2d()
    uh = DiscreteField(V, np.random.default_rng(0).normal(size=V.ndofs))
    Ru = ritz_project(uh, V, A, D, pen)
    assert np.allclose(Ru.coefficients, uh.coefficients, atol=1e-9)


def test_ritz_is_idempotent():
    V, D, pen, A = setup_2d()
    v = AnalyticField(
        V.mesh,
        lambda x: np.sin(3 * x[..., 0]) * np.exp(x[..., 1]),
        lambda x: np.exp(x[..., 1])[..., None] * np.stack([3 * np.cos(3 * x[..., 0]), np.sin(3 * x[..., 0])], -1),
        degree=6,
    )
    R1 = ritz_project(v, V, A, D, pen)
    R2 = ritz_project(R1, V, A, D, pen)
    assert np.allclose(R1.coefficients, R2.coefficients, atol=1e-9)


def test_ritz_residual_vanishes():
    V, D, pen, A = setup_2d()
    v = AnalyticField(
        V.mesh,
        lambda x: np.cos(2 * x[..., 0] + x[..., 1]),
        lambda x: -np.sin(2 * x[..., 0] + x[..., 1])[..., None] * np.array([2.0, 1.0]),
        degree=6,
    )
    Rv = ritz_project(v, V, A, D, pen)
    rhs = apply_form(v, V, D, pen)
    assert np.abs(A @ Rv.coefficients - rhs).max() <= 1e-11 * np.abs(rhs).max()


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=15, deadline=None)
def test_ritz_is_linear(a, b):
    V, D, pen, A = setup_2d(p=1)
    solver = LinearSolver(A)
    f1 = AnalyticField(V.mesh, lambda x: x[..., 0] ** 3, lambda x: np.stack([3 * x[..., 0] ** 2, 0 * x[..., 0]], -1), 3)
    f2 = AnalyticField(V.mesh, lambda x: np.sin(x[..., 1]), lambda x: np.stack([0 * x[..., 0], np.cos(x[..., 1])], -1), 6)
    lhs = ritz_project(CompositeField([(a, f1), (b, f2)]), V, A, D, pen, solver)
    rhs = a * ritz_project(f1, V, A, D, pen, solver).coefficients + b * ritz_project(f2, V, A, D, pen, solver).coefficients
    assert np.allclose(lhs.coefficients, rhs, atol=1e-9 * (1 + abs(a) + abs(b)))


def test_shifted_solve_matches_plain_solve():
    V, D, pen, A = setup_2d()
    v = AnalyticField(
        V.mesh, lambda x: x[..., 0] * x[..., 1] ** 2, lambda x: np.stack([x[..., 1] ** 2, 2 * x[..., 0] * x[..., 1]], -1), 3
    )
    shift = DiscreteField(V, np.random.default_rng(4).normal(size=V.ndofs))
    a = ritz_project(v, V, A, D, pen)
    b = ritz_project(v, V, A, D, pen, shift=shift)
    assert np.allclose(a.coefficients, b.coefficients, atol=1e-9)


def test_discrete_reconstruction_gives_back_uh():
    # u* in V_h means R u* = u* and so u** = u_h
    V, D, pen, A = setup_2d()
    uh = DiscreteField(V, np.random.default_rng(1).normal(size=V.ndofs))
    ustar = DiscreteField(V, np.random.default_rng(2).normal(size=V.ndofs))
    imp = improve(ustar, uh, A, D, pen)
    assert np.allclose(imp.ritz.coefficients, ustar.coefficients, atol=1e-9)
    assert np.allclose(imp.correction.coefficients, ustar.coefficients - uh.coefficients, atol=1e-9)
    xi = np.array([[0.2, 0.3]])
    cells = np.arange(V.mesh.n_cells)
    assert np.allclose(imp.field.evaluate(cells, xi)[0], uh.evaluate(cells, xi)[0], atol=1e-9)


@pytest.mark.parametrize("problem,p,post", [("smooth2d", 1, "spr"), ("smooth2d", 2, "spr"), ("smooth1d", 2, "siac")])
def test_galerkin_orthogonality_of_improved_field(problem, p, post):
    P = get_problem(problem)
    L = solve_level(P, P.mesh(4 if P.dim == 2 else 40), p, post=PostSpec(post))
    defect = L.improved.orthogonality_defect(L.load)
    assert defect <= 1e-10 * max(1.0, np.abs(L.load).max())


@pytest.mark.parametrize("problem,p,post", [("smooth2d", 1, "spr"), ("smooth2d", 2, "spr"), ("smooth1d", 1, "siac")])
def test_energy_error_does_not_increase(problem, p, post):
    # u - u* splits A_h-orthogonally into (u - u**) and (R u* - u_h);
    # A_h(e, e) may be negative off the discrete space, so compare signed squares
    P = get_problem(problem)
    pen = PenaltySpec()
    L = solve_level(P, P.mesh(4 if P.dim == 2 else 20), p, pen, PostSpec(post))
    es = error_norms(P.u, P.grad_u, L.ustar, P.D, pen)
    ess = error_norms(P.u, P.grad_u, L.uss, P.D, pen)
    delta = L.improved.correction
    d2 = form_value(delta, delta, P.D, pen, p)
    assert d2 >= 0
    assert ess.energy <= es.energy + 1e-10
    scale = abs(es.energy_sq) + d2
    assert es.energy_sq == pytest.approx(ess.energy_sq + d2, abs=1e-3 * scale)


def test_continuous_data_orthogonality_on_corner():
    # corner2d with the continuous interpolant of u as reconstruction
    P = get_problem("corner2d")
    mesh = P.mesh(2)
    L = solve_level(P, mesh, 1)
    z = interpolate(P.u, PolySpace(mesh, 2, continuous=True))
    imp = improve(z, L.uh, L.A, P.D, PenaltySpec(), L.solver)
    assert imp.orthogonality_defect(L.load) <= 1e-10 * max(1.0, np.abs(L.load).max())


def test_1d_exact_solution_is_fixed_point():
    # when u* = u, the improved field is u itself
    mesh = uniform_interval(0, 1, 8)
    V = PolySpace(mesh, 1, continuous=True)
    D, pen = DiffusionSpec.identity(1), PenaltySpec()
    A = assemble_matrix(V, D, pen)

    def u(x):
        return np.sin(np.pi * x[..., 0])

    def grad(x):
        return np.pi * np.cos(np.pi * x)

    exact = AnalyticField(mesh, u, grad, degree=8)
    uh = ritz_project(exact, V, A, D, pen)
    imp = improve(exact, uh, A, D, pen)
    assert np.allclose(imp.correction.coefficients, 0, atol=1e-10)
