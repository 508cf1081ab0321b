import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from orthopost.mesh import structured_square, uniform_interval
from orthopost.space import (
    AnalyticField,
    DiscreteField,
    LagrangeBasis,
    PolySpace,
    SubdividedPolyField,
    error_norms,
    interpolate,
    jump_sq,
    l2_norm,
)


@pytest.mark.parametrize("dim", [1, 2])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_lagrange_nodal_and_partition_of_unity(dim, p):
    b = LagrangeBasis(dim, p)
    V, G = b.tabulate(b.nodes, order=1)
    assert np.allclose(V, np.eye(len(b)), atol=1e-12)
    pts = np.random.default_rng(0).random((7, dim)) * 0.5
    V, G = b.tabulate(pts, order=1)
    assert np.allclose(V.sum(axis=1), 1.0)
    assert np.allclose(G.sum(axis=1), 0.0, atol=1e-11)


def test_cg_dof_counts():
    assert PolySpace(uniform_interval(0, 1, 5), 3, continuous=True).ndofs == 16
    assert PolySpace(structured_square(3), 2, continuous=True).ndofs == 49
    assert PolySpace(structured_square(3), 2).ndofs == 18 * 6


@pytest.mark.parametrize("continuous", [False, True])
@pytest.mark.parametrize("p", [1, 2, 3])
def test_interpolation_reproduces_polynomials_2d(p, continuous):
    mesh = structured_square(3, jitter=0.2, seed=4)
    V = PolySpace(mesh, p, continuous)

    def poly(x):
        return (1 + x[..., 0] - 2 * x[..., 1]) ** p

    def grad(x):
        base = p * (1 + x[..., 0] - 2 * x[..., 1]) ** (p - 1)
        return np.stack([base, -2 * base], axis=-1)

    uh = interpolate(poly, V)
    e = error_norms(poly, grad, uh)
    assert e.L2 < 1e-12 and e.H1 < 1e-11 and e.dG < 1e-11


def test_l2_norm_of_identity():
    # ||x||_{L2(0,1)} = 1/sqrt(3)
    uh = interpolate(lambda x: x[..., 0], PolySpace(uniform_interval(0, 1, 3), 1))
    assert l2_norm(uh) == pytest.approx(1 / np.sqrt(3), rel=1e-13)


def test_l2_norm_triangle_area():
    m = structured_square(2, jitter=0.1)
    one = AnalyticField(m, lambda x: np.ones(x.shape[:-1]), degree=0)
    assert l2_norm(one) == pytest.approx(1.0, rel=1e-13)


def test_jump_of_discontinuous_field():
    # u = 0 on (0, 1/2), 1 on (1/2, 1): jump 1 at the middle, h_e = 1/2
    m = uniform_interval(0, 1, 2)
    V = PolySpace(m, 1)
    uh = DiscreteField(V, np.array([0.0, 0.0, 1.0, 1.0]))
    assert jump_sq(uh) == pytest.approx(1 / 0.5 + 1 / 0.5)  # middle plus boundary x=1
    assert jump_sq(uh, boundary_data=lambda x: x[..., 0]) == pytest.approx(2.0)


def test_continuous_field_has_no_interior_jump():
    m = structured_square(3, jitter=0.2)
    uh = interpolate(lambda x: np.sin(x[..., 0]) * x[..., 1], PolySpace(m, 2, True))
    assert jump_sq(uh, boundary_data=lambda x: uh(x.reshape(-1, 2)).reshape(x.shape[:-1])) < 1e-20


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(0.01, 0.99))
@settings(max_examples=40, deadline=None)
def test_subdivided_field_evaluation(coef, t):
    # two sub-cells on one cell [0, 2]; polynomial in s on each half
    m = uniform_interval(0, 2, 1)
    c = np.array(coef).reshape(1, 2, 2)
    f = SubdividedPolyField(m, [0.5], c)
    v, g, h = f.evaluate(np.array([0]), np.array([[t]]), order=2)
    sub = 0 if t < 0.5 else 1
    s = (t - 0.5 * sub) / 0.5
    a0, a1 = c[0, sub]
    assert v[0, 0] == pytest.approx(a0 + a1 * s, abs=1e-12)
    # d/dx = d/ds * ds/dt * dt/dx = a1 * 2 * (1/2)
    assert g[0, 0, 0] == pytest.approx(a1, abs=1e-12)
    assert h[0, 0, 0, 0] == pytest.approx(0.0)


def test_composite_arithmetic():
    m = uniform_interval(0, 1, 4)
    V = PolySpace(m, 2)
    a = interpolate(lambda x: x[..., 0] ** 2, V)
    b = interpolate(lambda x: x[..., 0], V)
    c = 2.0 * a - b
    xi = np.array([[0.3]])
    x = m.to_physical(np.arange(4), xi)[..., 0]
    assert np.allclose(c.evaluate(np.arange(4), xi)[0], 2 * x**2 - x)
    assert c.degree == 2


def test_discrete_field_rejects_wrong_length():
    V = PolySpace(uniform_interval(0, 1, 2), 1)
    with pytest.raises(ValueError):
        DiscreteField(V, np.zeros(3))


def test_continuous_space_rejects_hanging_nodes():
    m = structured_square(2)
    marks = np.zeros(m.n_cells, bool)
    marks[0] = True
    with pytest.raises(ValueError):
        PolySpace(m.refine(marks), 1, continuous=True)
