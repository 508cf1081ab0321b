"""Ritz projection and the Galerkin-orthogonal reconstruction u** = u* - R u* + u_h."""

from dataclasses import dataclass

import numpy as np

from .ipdg import LinearSolver, apply_form
from .space import CompositeField, DiscreteField


def ritz_project(v, space, A, D, penalty, solver=None, shift=None):
    """Discrete field R v with A_h(R v, phi) = A_h(v, phi) for all phi.

    ``shift`` (a DiscreteField) is subtracted before solving and added back,
    which keeps the solve well scaled when v is close to the space.
    """
    solver = solver or LinearSolver(A)
    rhs = apply_form(v, space, D, penalty)
    if shift is None:
        return DiscreteField(space, solver.solve(rhs))
    delta = solver.solve(rhs - A @ shift.coefficients)
    return DiscreteField(space, shift.coefficients + delta)


@dataclass
class ImprovedReconstruction:
    """u** kept as the composite (+1) u* + (-1) R u* + (+1) u_h."""

    ustar: object
    ritz: DiscreteField
    uh: DiscreteField
    D: object
    penalty: object

    @property
    def field(self):
        return CompositeField([(1.0, self.ustar), (-1.0, self.ritz), (1.0, self.uh)])

    @property
    def correction(self):
        """R u* - u_h as a discrete field."""
        return DiscreteField(self.uh.space, self.ritz.coefficients - self.uh.coefficients)

    def orthogonality_defect(self, load):
        """max_i |A_h(u - u**, phi_i)|, using A_h(u, phi_i) = load_i."""
        r = load - apply_form(self.field, self.uh.space, self.D, self.penalty)
        return float(np.max(np.abs(r)))


def improve(ustar, uh, A, D, penalty, solver=None):
    """Build u** from a reconstruction ``ustar`` of the discrete solution ``uh``.

    The factorisation in ``solver`` (the one used for u_h) is reused.
    """
    ritz = ritz_project(ustar, uh.space, A, D, penalty, solver=solver, shift=uh)
    return ImprovedReconstruction(ustar, ritz, uh, D, penalty)
