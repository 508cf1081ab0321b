"""Convergence and adaptivity drivers, EOC tables and CSV output."""

import csv
import logging
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .adapt import adapt_loop
from .estimate import estimate
from .ipdg import PenaltySpec
from .mesh import write_macro
from .pipeline import PostSpec, solve_level
from .problems import get_problem
from .space import dump_field, error_norms

log = logging.getLogger(__name__)

EOC_COLUMNS = (
    "level",
    "n_cells",
    "dofs",
    "err_L2_uh",
    "err_H1_uh",
    "err_L2_ustar",
    "err_H1_ustar",
    "err_L2_ustarstar",
    "err_H1_ustarstar",
    "Rh",
    "Rss",
    "eff_h",
    "eff_ss",
)


@dataclass
class RunConfig:
    problem: str = "smooth1d"
    p: int = 2
    levels: int = 5
    post: str = "siac"
    hyper: bool = False
    sigma: float = 10.0
    r: int = None
    m: int = None
    mirror_left: str = "odd"
    mirror_right: str = "odd"
    n0: int = None  # initial number of intervals (1D) or macro subdivisions (2D)
    seed: int = 1
    tol: float = 1e-2
    driver: str = "rss"
    max_iter: int = 20
    max_cells: int = None
    out: str = None

    @classmethod
    def from_mapping(cls, values):
        """Build from string or typed values, ignoring unknown keys."""
        kw = {}
        types = {f.name: f.type for f in fields(cls)}
        for key, val in values.items():
            key = key.replace("-", "_")
            if key not in types or val is None:
                continue
            kw[key] = _coerce(val, types[key])
        return cls(**kw)

    def validate(self):
        problem = get_problem(self.problem)  # raises on unknown names
        if self.post == "siac" and problem.dim != 1:
            raise ValueError("SIAC post-processing needs a 1D problem; use --post spr in 2D")
        if self.post == "spr" and problem.dim != 2:
            raise ValueError("patch recovery needs a 2D problem; use --post siac in 1D")
        if self.levels < 1:
            raise ValueError("need at least one level")
        return problem

    @property
    def penalty(self):
        return PenaltySpec("hyper" if self.hyper else "standard", self.sigma)

    @property
    def postspec(self):
        return PostSpec(self.post, self.r, self.m, self.mirror_left, self.mirror_right)


def _coerce(val, typ):
    if not isinstance(val, str):
        return val
    text = val.strip()
    if text.lower() in ("none", ""):
        return None
    if typ in (bool, "bool"):
        return text.lower() in ("1", "true", "yes", "on")
    if typ in (int, "int"):
        return int(text)
    if typ in (float, "float"):
        return float(text)
    return text


def eoc(errors):
    """log2 ratios of consecutive errors, NaN for the first entry."""
    errors = np.asarray(errors, dtype=float)
    out = np.full(len(errors), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[1:] = np.log2(errors[:-1] / errors[1:])
    return out


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)
    extra: list = field(default_factory=list)  # per level: energy errors (signed squares too), orthogonality defect

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def rates(self, name):
        return eoc(self.column(name))

    def format(self):
        err_cols = [c for c in EOC_COLUMNS if c.startswith("err_")]
        head = f"{'level':>5} {'cells':>7} {'dofs':>7} " + " ".join(f"{c[4:]:>16}" for c in err_cols)
        lines = [head]
        rates = {c: self.rates(c) for c in err_cols}
        for k, r in enumerate(self.rows):
            cells = []
            for c in err_cols:
                rate = "" if math.isnan(rates[c][k]) else f"({rates[c][k]:.2f})"
                cells.append(f"{r[c]:.3e}{rate:>7}".rjust(16))
            lines.append(f"{r['level']:>5} {r['n_cells']:>7} {r['dofs']:>7} " + " ".join(cells))
        return "\n".join(lines)


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r[c] is None else repr(r[c]) for c in columns])


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv` (or the history writer) as dicts of floats."""
    with open(path, newline="") as fh:
        sample = fh.readline()
        fh.seek(0)
        delim = "," if "," in sample else " "
        reader = csv.DictReader(fh, delimiter=delim)
        return [{k: (float(v) if v not in ("", None) else None) for k, v in row.items()} for row in reader]


def _initial_mesh(problem, cfg):
    if cfg.n0 is not None:
        return problem.mesh(cfg.n0)
    if problem.dim == 1:
        return problem.mesh(20)
    return problem.mesh()


def run_convergence(cfg):
    """Uniform refinement study; returns a ConvergenceTable."""
    problem = cfg.validate()
    post = cfg.postspec
    penalty = cfg.penalty
    mesh = _initial_mesh(problem, cfg)
    table = ConvergenceTable()
    for lev in range(cfg.levels):
        L = solve_level(problem, mesh, cfg.p, penalty, post)
        eh = error_norms(problem.u, problem.grad_u, L.uh, problem.D, penalty)
        rh = estimate(L.uh, problem)
        row = {"level": lev, "n_cells": mesh.n_cells, "dofs": L.space.ndofs}
        row.update(err_L2_uh=eh.L2, err_H1_uh=eh.H1, Rh=rh.total, eff_h=rh.efficiency(eh.dG))
        extra = {"energy_uh": eh.energy, "dG_uh": eh.dG}
        if L.ustar is not None:
            es = error_norms(problem.u, problem.grad_u, L.ustar, problem.D, penalty)
            ess = error_norms(problem.u, problem.grad_u, L.uss, problem.D, penalty)
            rs = estimate(L.uss, problem)
            row.update(err_L2_ustar=es.L2, err_H1_ustar=es.H1, err_L2_ustarstar=ess.L2, err_H1_ustarstar=ess.H1)
            row.update(Rss=rs.total, eff_ss=rs.efficiency(ess.dG))
            extra.update(
                energy_ustar=es.energy,
                energy_ustarstar=ess.energy,
                energy_sq_ustar=es.energy_sq,
                energy_sq_ustarstar=ess.energy_sq,
                dG_ustarstar=ess.dG,
                orthogonality=L.improved.orthogonality_defect(L.load),
                load_max=float(np.max(np.abs(L.load))),
            )
        else:
            for c in ("err_L2_ustar", "err_H1_ustar", "err_L2_ustarstar", "err_H1_ustarstar", "Rss", "eff_ss"):
                row[c] = float("nan")
        table.rows.append(row)
        table.extra.append(extra)
        log.info("level %d: %d cells, %d dofs", lev, mesh.n_cells, L.space.ndofs)
        if lev + 1 < cfg.levels:
            mesh = mesh.refine_uniform()
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        write_csv(os.path.join(cfg.out, "eoc.csv"), table.rows, EOC_COLUMNS)
        _dump_level(L, problem, cfg.out)
    return table


def _dump_level(level, problem, out):
    if level.mesh.dim == 2:
        write_macro(level.mesh, os.path.join(out, "mesh.dat"))
    dump_field(level.uh, os.path.join(out, "uh.dat"), exact=problem.u)
    if level.ustar is not None:
        dump_field(level.ustar, os.path.join(out, "ustar.dat"), exact=problem.u)
        dump_field(level.uss, os.path.join(out, "ustarstar.dat"), exact=problem.u)


def run_adaptive(cfg):
    """Adaptive run; writes history.csv and final dumps when ``cfg.out`` is set."""
    problem = get_problem(cfg.problem)
    mesh = _initial_mesh(problem, cfg)
    hist = adapt_loop(
        problem,
        cfg.p,
        driver=cfg.driver,
        post=cfg.postspec,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        penalty=cfg.penalty,
        mesh=mesh,
        max_cells=cfg.max_cells,
    )
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        hist.write_csv(os.path.join(cfg.out, "history.csv"))
        _dump_level(hist.final, problem, cfg.out)
    return hist
