"""Catalog of model problems with manufactured solutions.

Forcing terms were obtained by symbolic differentiation and are written out
in closed form; ``self_check`` verifies them against finite differences of
the exact solution.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .ipdg import DiffusionSpec
from .mesh import lshape, structured_square, uniform_interval

PI = np.pi


@dataclass
class ProblemSpec:
    name: str
    dim: int
    domain: str
    D: DiffusionSpec
    f: callable
    u: callable
    grad_u: callable
    regularity: str
    macro: callable = field(repr=False, default=None)
    inside: callable = field(repr=False, default=None)
    bbox: tuple = ((0.0, 1.0),)

    @property
    def g(self):
        """Dirichlet data, the trace of the exact solution."""
        return self.u

    def mesh(self, n=None, **kwargs):
        return self.macro(n, **kwargs) if n is not None else self.macro(**kwargs)


def _w(s):
    return np.sin(6 * PI * s) ** 2 * np.cos(4.5 * PI * s)


def _dw(s):
    return 0.75 * PI * (5 * np.cos(1.5 * PI * s) + 11 * np.cos(10.5 * PI * s)) * np.sin(6 * PI * s)


def _d2w(s):
    return PI**2 * (
        -92.25 * np.sin(6 * PI * s) ** 2 * np.cos(4.5 * PI * s)
        + 72 * np.cos(4.5 * PI * s) * np.cos(6 * PI * s) ** 2
        - 27 * np.cos(7.5 * PI * s)
        + 27 * np.cos(16.5 * PI * s)
    )


def _smooth1d():
    return ProblemSpec(
        name="smooth1d",
        dim=1,
        domain="(0, 1)",
        D=DiffusionSpec.identity(1),
        f=lambda x: -_d2w(x[..., 0]),
        u=lambda x: _w(x[..., 0]),
        grad_u=lambda x: _dw(x[..., 0])[..., None],
        regularity="C^infinity",
        macro=lambda n=20: uniform_interval(0.0, 1.0, n),
    )


_KINK_A, _KINK_L = 0.3, 0.4


def _kinked(fn, x, scale):
    s = (x[..., 0] - _KINK_A) / _KINK_L
    inside = (s > 0) & (s < 1)
    return np.where(inside, fn(np.clip(s, 0, 1)) * scale, 0.0)


def _kinked1d():
    return ProblemSpec(
        name="kinked1d",
        dim=1,
        domain="(0, 1)",
        D=DiffusionSpec.identity(1),
        f=lambda x: _kinked(_d2w, x, -1.0 / _KINK_L**2),
        u=lambda x: _kinked(_w, x, 1.0),
        grad_u=lambda x: _kinked(_dw, x, 1.0 / _KINK_L)[..., None],
        regularity="C^1 but not C^2 at x=0.3, C^2 but not C^3 at x=0.7",
        macro=lambda n=20: uniform_interval(0.0, 1.0, n),
    )


def _smooth2d_parts(x):
    X, Y = x[..., 0], x[..., 1]
    q = 0.25 + X * Y
    phase = PI * X / q
    grad_phase = np.stack([PI / (4 * q**2), -PI * X**2 / q**2], axis=-1)
    lap_phase = -PI * Y / (2 * q**3) + 2 * PI * X**3 / q**3
    a, da = np.sin(phase), np.cos(phase)
    b = np.sin(PI * (X + Y))
    grad_b = (PI * np.cos(PI * (X + Y)))[..., None] * np.ones(2)
    grad_a = da[..., None] * grad_phase
    lap_a = -a * np.sum(grad_phase**2, axis=-1) + da * lap_phase
    lap_b = -2 * PI**2 * b
    u = a * b
    grad = a[..., None] * grad_b + b[..., None] * grad_a
    lap = a * lap_b + b * lap_a + 2 * np.sum(grad_a * grad_b, axis=-1)
    return u, grad, lap


def _smooth2d_f(x):
    _, grad, lap = _smooth2d_parts(x)
    d = np.sum(x**2, axis=-1) + 0.5
    return -(d * lap + 2 * np.sum(x * grad, axis=-1))


def _smooth2d(jitter=0.15, seed=1):
    D = DiffusionSpec.scalar(lambda x: np.sum(x**2, axis=-1) + 0.5, lambda x: 2.0 * x, dim=2, degree=2)
    return ProblemSpec(
        name="smooth2d",
        dim=2,
        domain="(0, 1)^2",
        D=D,
        f=_smooth2d_f,
        u=lambda x: _smooth2d_parts(x)[0],
        grad_u=lambda x: _smooth2d_parts(x)[1],
        regularity="C^infinity",
        macro=lambda n=8, jitter=jitter, seed=seed: structured_square(n, jitter=jitter, seed=seed),
        bbox=((0.0, 1.0), (0.0, 1.0)),
    )


def _polar(x):
    r = np.hypot(x[..., 0], x[..., 1])
    theta = np.mod(np.arctan2(x[..., 1], x[..., 0]), 2 * PI)
    return r, theta


def corner_u(x):
    r, theta = _polar(x)
    return r ** (2 / 3) * np.sin(2 * theta / 3)


def corner_grad(x):
    r, theta = _polar(x)
    rr = np.where(r > 0, r, 1.0) ** (-1 / 3) * (2 / 3)
    return np.stack([-rr * np.sin(theta / 3), rr * np.cos(theta / 3)], axis=-1)


def _lshape_inside(x):
    X, Y = x[..., 0], x[..., 1]
    box = (np.abs(X) < 1) & (np.abs(Y) < 1)
    return box & ~((X >= 0) & (Y <= 0))


def _corner2d():
    return ProblemSpec(
        name="corner2d",
        dim=2,
        domain="(-1, 1)^2 minus [0, 1] x [-1, 0]",
        D=DiffusionSpec.identity(2),
        f=lambda x: np.zeros(x.shape[:-1]),
        u=corner_u,
        grad_u=corner_grad,
        regularity="H^{3/2}: r^{2/3} sin(2 theta / 3) about the re-entrant corner",
        macro=lambda n=2: lshape(n),
        inside=_lshape_inside,
        bbox=((-1.0, 1.0), (-1.0, 1.0)),
    )


def _omega_parts(x):
    X, Y = x[..., 0], x[..., 1]
    s = 1.5 * PI * (1 - X**2) * (1 - Y**2)
    grad_s = 1.5 * PI * np.stack([-2 * X * (1 - Y**2), -2 * Y * (1 - X**2)], axis=-1)
    lap_s = 1.5 * PI * (-2 * (1 - Y**2) - 2 * (1 - X**2))
    omega = -np.sin(s)
    grad_omega = -np.cos(s)[..., None] * grad_s
    lap_omega = np.sin(s) * np.sum(grad_s**2, axis=-1) - np.cos(s) * lap_s
    return omega, grad_omega, lap_omega


def _extcorner_u(x):
    return _omega_parts(x)[0] * corner_u(x)


def _extcorner_grad(x):
    omega, grad_omega, _ = _omega_parts(x)
    return omega[..., None] * corner_grad(x) + corner_u(x)[..., None] * grad_omega


def _extcorner_f(x):
    _, grad_omega, lap_omega = _omega_parts(x)
    # the corner function is harmonic
    return -(2 * np.sum(grad_omega * corner_grad(x), axis=-1) + corner_u(x) * lap_omega)


def _extcorner2d():
    return ProblemSpec(
        name="extcorner2d",
        dim=2,
        domain="(-1, 1)^2 minus [0, 1] x [-1, 0]",
        D=DiffusionSpec.identity(2),
        f=_extcorner_f,
        u=_extcorner_u,
        grad_u=_extcorner_grad,
        regularity="corner singularity times a smooth, strongly varying factor",
        macro=lambda n=2: lshape(n),
        inside=_lshape_inside,
        bbox=((-1.0, 1.0), (-1.0, 1.0)),
    )


_CATALOG = {
    "smooth1d": _smooth1d,
    "kinked1d": _kinked1d,
    "smooth2d": _smooth2d,
    "corner2d": _corner2d,
    "extcorner2d": _extcorner2d,
}


def catalog():
    return list(_CATALOG)


def get_problem(name, **kwargs):
    try:
        return _CATALOG[name](**kwargs)
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; available: {', '.join(_CATALOG)}") from None


# sixth-order central first-derivative stencil
_FD_OFFSETS = np.array([-3, -2, -1, 1, 2, 3])
_FD_WEIGHTS = np.array([-1, 9, -45, 45, -9, 1]) / 60.0


def fd_operator(problem, x, step=1e-3):
    """-div(D grad u) at points (n, dim) by nested finite differences of u."""
    x = np.atleast_2d(x)
    dim = problem.dim

    def d_dx(fn, pts, i):
        e = np.zeros(dim)
        e[i] = step
        return sum(w * fn(pts + k * e) for k, w in zip(_FD_OFFSETS, _FD_WEIGHTS)) / step

    def flux(i):
        def fi(pts):
            Dx = problem.D(pts)
            return sum(Dx[..., i, j] * d_dx(problem.u, pts, j) for j in range(dim))

        return fi

    return -sum(d_dx(flux(i), x, i) for i in range(dim))


def sample_points(problem, n=100, seed=0, margin=0.05):
    """Quasi-random interior points, away from the boundary and re-entrant corner."""
    lo = np.array([b[0] for b in problem.bbox]) + margin
    hi = np.array([b[1] for b in problem.bbox]) - margin
    sampler = qmc.Halton(d=problem.dim, seed=seed)
    pts = []
    while len(pts) < n:
        cand = qmc.scale(sampler.random(4 * n), lo, hi)
        ok = np.ones(len(cand), dtype=bool)
        if problem.inside is not None:
            ok &= problem.inside(cand)
            ok &= np.linalg.norm(cand, axis=1) > margin
            if problem.dim == 2:
                ok &= ~((cand[:, 0] > -margin) & (cand[:, 1] < margin))
        if problem.name == "kinked1d":
            ok &= (np.abs(cand[:, 0] - 0.3) > margin) & (np.abs(cand[:, 0] - 0.7) > margin)
        pts += list(cand[ok])
    return np.array(pts[:n])


def self_check(problem, n=100, rtol=1e-6):
    """Max relative mismatch between f and finite differences of u."""
    x = sample_points(problem, n)
    fd = fd_operator(problem, x)
    f = problem.f(x)
    scale = max(np.max(np.abs(f)), np.max(np.abs(problem.u(x))), 1.0)
    err = float(np.max(np.abs(fd - f)) / scale)
    return err, err <= rtol
