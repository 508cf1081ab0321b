"""Marking and the solve / estimate / mark / refine loop."""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .estimate import estimate
from .ipdg import PenaltySpec
from .pipeline import PostSpec, solve_level
from .space import error_norms

log = logging.getLogger(__name__)

DRIVERS = ("rh", "rss")


def mark(report, tol=0.0):
    """Cells whose indicator exceeds the mean indicator.

    If nothing qualifies while the estimate is above ``tol`` every cell
    is marked, so the loop cannot stall on equidistributed indicators.
    """
    lam = np.asarray(report.lam)
    marks = lam > lam.sum() / len(lam)
    if not marks.any() and report.total > tol:
        log.info("no cell above the mean indicator; refining uniformly")
        marks[:] = True
    return marks


@dataclass
class IterationRecord:
    iter: int
    dofs: int
    cells: int
    R: float
    err_dG: float = float("nan")
    err_L2: float = float("nan")
    marked: int = 0
    err_dG_uh: float = float("nan")
    err_dG_uss: float = float("nan")


@dataclass
class AdaptHistory:
    driver: str
    post: str
    tol: float
    records: list = field(default_factory=list)
    converged: bool = False
    final: object = None  # last Level

    COLUMNS = ("iter", "dofs", "cells", "R", "err_dG", "err_L2", "marked")

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=" ")
            w.writerow(self.COLUMNS)
            for r in self.records:
                w.writerow([repr(getattr(r, c)) if isinstance(getattr(r, c), float) else getattr(r, c) for c in self.COLUMNS])


def adapt_loop(problem, p, driver="rss", post="spr", tol=1e-2, max_iter=20, penalty=None, mesh=None, max_cells=None):
    """Adaptive refinement driven by R_h (``rh``) or R** (``rss``)."""
    if driver not in DRIVERS:
        raise ValueError(f"driver must be one of {DRIVERS}")
    post = post if isinstance(post, PostSpec) else PostSpec(post)
    if driver == "rss" and post.kind == "none":
        raise ValueError("the R** driver needs a postprocessor")
    penalty = penalty or PenaltySpec()
    mesh = mesh if mesh is not None else problem.mesh()
    hist = AdaptHistory(driver, post.kind, tol)
    exact = problem.u is not None and problem.grad_u is not None
    for it in range(max_iter):
        level = solve_level(problem, mesh, p, penalty, post if driver == "rss" else PostSpec("none"))
        target = level.uss if driver == "rss" else level.uh
        report = estimate(target, problem)
        rec = IterationRecord(it, level.space.ndofs, mesh.n_cells, report.total)
        if exact:
            e = error_norms(problem.u, problem.grad_u, target)
            rec.err_dG, rec.err_L2 = e.dG, e.L2
            if driver == "rss":
                rec.err_dG_uss = e.dG
                rec.err_dG_uh = error_norms(problem.u, problem.grad_u, level.uh).dG
            else:
                rec.err_dG_uh = e.dG
        hist.records.append(rec)
        hist.final = level
        log.info("iter %d: cells %d dofs %d R %.3e", it, mesh.n_cells, rec.dofs, rec.R)
        if report.total <= tol:
            hist.converged = True
            break
        if max_cells is not None and mesh.n_cells >= max_cells:
            break
        marks = mark(report, tol)
        rec.marked = int(marks.sum())
        mesh = mesh.refine(marks)
    return hist


def dofs_at_error(history, error, column="err_dG", quantity="dofs"):
    """``quantity`` (dofs or cells) needed to reach ``error``, log-log interpolated.

    NaN when the history never gets below ``error``.
    """
    e = history.column(column)
    d = history.column(quantity).astype(float)
    if error > e[0]:
        return d[0]
    for k in range(1, len(e)):
        if e[k] <= error:
            t = (np.log(error) - np.log(e[k - 1])) / (np.log(e[k]) - np.log(e[k - 1]))
            return float(np.exp(np.log(d[k - 1]) + t * (np.log(d[k]) - np.log(d[k - 1]))))
    return float("nan")
