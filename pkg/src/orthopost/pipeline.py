"""One solve / post-process / improve pass on a given mesh."""

from dataclasses import dataclass

import numpy as np

from .ipdg import LinearSolver, PenaltySpec, assemble_load, assemble_matrix
from .ortho import improve
from .siac import KernelSpec, MirrorExtension, convolve, default_kernel
from .space import DiscreteField, PolySpace
from .spr import recover


@dataclass
class PostSpec:
    """Which reconstruction to build: ``siac``, ``spr`` or ``none``."""

    kind: str = "siac"
    r: int = None
    m: int = None
    left_parity: str = "odd"
    right_parity: str = "odd"

    def __post_init__(self):
        if self.kind not in ("siac", "spr", "none"):
            raise ValueError(f"unknown postprocessor {self.kind!r}")

    def mirror(self, ga, gb):
        return MirrorExtension(ga, gb, self.left_parity, self.right_parity)

    def kernel(self, p):
        if self.r is None and self.m is None:
            return default_kernel(p)
        base = default_kernel(p)
        return KernelSpec.build(base.r if self.r is None else self.r, base.m if self.m is None else self.m)


@dataclass
class Level:
    mesh: object
    space: PolySpace
    A: object
    load: np.ndarray
    solver: LinearSolver
    uh: DiscreteField
    ustar: object = None
    improved: object = None

    @property
    def uss(self):
        return None if self.improved is None else self.improved.field


def solve_level(problem, mesh, p, penalty=None, post=None, continuous=None):
    """Solve for u_h on ``mesh`` and optionally build u* and u**.

    1D problems use the vertex-continuous space by default, 2D problems
    the discontinuous one.
    """
    penalty = penalty or PenaltySpec()
    post = post or PostSpec("none")
    if continuous is None:
        continuous = problem.dim == 1
    space = PolySpace(mesh, p, continuous)
    A = assemble_matrix(space, problem.D, penalty)
    load = assemble_load(space, problem.f, problem.g, problem.D, penalty)
    solver = LinearSolver(A)
    uh = DiscreteField(space, solver.solve(load))
    level = Level(mesh, space, A, load, solver, uh)
    if post.kind == "none":
        return level
    if post.kind == "siac":
        (a, b) = mesh.bounds
        ga, gb = (float(v) for v in problem.g(np.array([[a], [b]])))
        level.ustar = convolve(uh, post.kernel(p), post.mirror(ga, gb))
    else:
        level.ustar = recover(uh, p)
    level.improved = improve(level.ustar, uh, A, problem.D, penalty, solver)
    return level
