"""Residual a posteriori indicators for the diffusion problem.

For a field w (u_h or u**) the element and facet indicators are

    eta_K^2 = || h_K (f + div(D grad w)) ||_K^2
    eta_e^2 = h_e || [D grad w] . n ||_e^2 + h_e^{-1} || [w] ||_e^2

where the flux jump is taken on interior facets and the solution jump on
the boundary is w - g.  Fields that are only piecewise smooth inside a
cell (1D breakpoints) get the element residual per sub-cell plus the
gradient jumps at the internal breakpoints.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .space import cell_rule, facet_quadrature, traces


@dataclass
class EstimatorReport:
    eta_K: np.ndarray  # per cell
    eta_e: np.ndarray  # per facet
    lam: np.ndarray  # per cell, combined indicator
    flux_part: np.ndarray = None  # per facet, flux-jump share of eta_e^2
    jump_part: np.ndarray = None  # per facet, solution-jump share of eta_e^2

    @property
    def total(self):
        return float(np.sqrt(np.sum(self.lam**2)))

    def efficiency(self, true_error):
        """R / true error, or None when the error vanishes."""
        if not true_error > 0:
            return None
        return self.total / true_error

    def write_csv(self, cell_path, facet_path):
        with open(cell_path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=" ")
            w.writerow(["cell_id", "eta_K", "lambda_K"])
            for k, (a, b) in enumerate(zip(self.eta_K, self.lam)):
                w.writerow([k, repr(float(a)), repr(float(b))])
        with open(facet_path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=" ")
            w.writerow(["facet_id", "eta_e"])
            for k, a in enumerate(self.eta_e):
                w.writerow([k, repr(float(a))])


def _quad_degree(field, extra):
    return 2 * field.degree + extra


def element_residual(field, f, D, extra=4):
    """eta_K per cell, sub-partition aware."""
    mesh = field.mesh
    cells = np.arange(mesh.n_cells)
    xi, w = cell_rule(mesh, _quad_degree(field, extra), field.breakpoints)
    x = mesh.to_physical(cells, xi)
    _, g, H = field.evaluate(cells, xi, order=2)
    divflux = np.einsum("cqj,cqj->cq", D.divergence(x, mesh.h.min()), g)
    divflux += np.einsum("cqij,cqij->cq", D(x), H)
    r = f(x) + divflux
    W = w[None, :] * np.abs(mesh.det)[:, None]
    hK = mesh.h
    eta2 = hK**2 * np.sum(W * r**2, axis=1)
    if mesh.dim == 1 and len(field.breakpoints):
        bp = field.breakpoints[:, None]
        gl = field.evaluate(cells, bp, order=1, side=-1)[1][..., 0]
        gr = field.evaluate(cells, bp, order=1, side=1)[1][..., 0]
        eta2 += 0.5 * hK * np.sum((gr - gl) ** 2, axis=1)
    return np.sqrt(eta2)


def facet_residual(field, D, g=None, extra=4):
    """(flux-jump part, solution-jump part) of eta_e^2 per facet."""
    mesh = field.mesh
    fq = facet_quadrature(mesh, _quad_degree(field, extra))
    f = fq.facets
    (vm, gm), (vp, gp) = traces(field, fq, order=1)
    Dx = D(fq.points)
    n = f.normal
    fm = np.einsum("fqij,fqj,fi->fq", Dx, gm, n)
    fp = np.einsum("fqij,fqj,fi->fq", Dx, gp, n)
    inner = f.interior[:, None]
    flux_jump = np.where(inner, fm - fp, 0.0)
    jump = np.where(inner, vm - vp, vm)
    if g is not None:
        b = f.boundary
        jump[b] -= g(fq.points[b])
    flux = f.h * np.sum(fq.weights * flux_jump**2, axis=1)
    sol = np.sum(fq.weights * jump**2, axis=1) / f.h
    return flux, sol


def combine(eta_K, eta_e, facets, n_cells):
    """lambda_K^2 = eta_K^2 + sum over facets of K, half shares on interior facets."""
    lam2 = eta_K**2
    share = np.where(facets.interior, 0.5, 1.0) * eta_e**2
    lam2 = lam2 + np.bincount(facets.minus, weights=share, minlength=n_cells)
    inner = facets.interior
    lam2 = lam2 + np.bincount(facets.plus[inner], weights=share[inner], minlength=n_cells)
    return np.sqrt(lam2)


def estimate(field, problem, extra=4):
    """Full report for ``field`` against the data of ``problem``."""
    mesh = field.mesh
    eta_K = element_residual(field, problem.f, problem.D, extra)
    flux, sol = facet_residual(field, problem.D, problem.g, extra)
    eta_e = np.sqrt(flux + sol)
    lam = combine(eta_K, eta_e, mesh.facets, mesh.n_cells)
    return EstimatorReport(eta_K, eta_e, lam, flux, sol)


def total(report):
    return report.total, report.lam


def efficiency(report, true_error):
    return report.efficiency(true_error)
