"""Command line interface: converge, adapt, kernel-info, self-check."""

import argparse
import logging
import sys

import numpy as np

from .bench import RunConfig, run_adaptive, run_convergence
from .problems import catalog, get_problem, self_check
from .siac import KernelSpec, default_kernel


def read_config(path):
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = val
    return values


def _common(sp):
    sp.add_argument("--config", help="file with 'key = value' lines (flags override it)")
    sp.add_argument("--problem", help=f"one of {', '.join(catalog())}")
    sp.add_argument("--p", type=int, help="polynomial degree")
    sp.add_argument("--hyper", action="store_true", default=None, help="penalty c p^2 / h^2")
    sp.add_argument("--sigma", type=float, help="penalty constant c (default 10)")
    sp.add_argument("--r", type=int, help="SIAC kernel: number of B-splines is 2r+1")
    sp.add_argument("--m", type=int, help="SIAC kernel: B-spline degree")
    sp.add_argument("--mirror-left", choices=("odd", "even"), help="boundary reflection at the left end")
    sp.add_argument("--mirror-right", choices=("odd", "even"), help="boundary reflection at the right end")
    sp.add_argument("--n0", type=int, help="initial intervals (1D) or macro subdivisions (2D)")
    sp.add_argument("--out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="orthopost", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("converge", help="uniform refinement study with EOC table")
    _common(conv)
    conv.add_argument("--levels", type=int)
    conv.add_argument("--post", choices=("siac", "spr", "none"))

    ad = sub.add_parser("adapt", help="adaptive refinement driven by R_h or R**")
    _common(ad)
    ad.add_argument("--tol", type=float)
    ad.add_argument("--driver", choices=("rh", "rss"))
    ad.add_argument("--post", choices=("siac", "spr"))
    ad.add_argument("--max-iter", type=int)
    ad.add_argument("--max-cells", type=int)

    ki = sub.add_parser("kernel-info", help="print SIAC kernel coefficients and moments")
    ki.add_argument("--p", type=int, default=2)
    ki.add_argument("--r", type=int)
    ki.add_argument("--m", type=int)

    sc = sub.add_parser("self-check", help="finite-difference check of the manufactured solutions")
    sc.add_argument("--problem", help="check only this problem")
    return parser


def _config(args):
    values = read_config(args.config) if args.config else {}
    for key, val in vars(args).items():
        if key in ("command", "config", "verbose") or val is None:
            continue
        values[key] = val
    return RunConfig.from_mapping(values)


def _kernel_info(args):
    if args.r is None and args.m is None:
        spec = default_kernel(args.p)
    else:
        base = default_kernel(args.p)
        spec = KernelSpec.build(args.r if args.r is not None else base.r, args.m if args.m is not None else base.m)
    print(f"r = {spec.r}, m = {spec.m}, support = [-{spec.half_width}, {spec.half_width}]")
    for g, c in zip(range(-spec.r, spec.r + 1), spec.coefficients):
        print(f"  c[{g:+d}] = {c:+.16f}")
    for j in range(2 * spec.r + 1):
        print(f"  moment {j}: {spec.moment(j):+.3e}")


def _self_check(args):
    names = [args.problem] if args.problem else catalog()
    ok_all = True
    for name in names:
        err, ok = self_check(get_problem(name))
        ok_all &= ok
        print(f"{name:12s} max rel. mismatch {err:.2e}  {'ok' if ok else 'FAILED'}")
    return 0 if ok_all else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "kernel-info":
            _kernel_info(args)
            return 0
        if args.command == "self-check":
            return _self_check(args)
        cfg = _config(args)
        if args.command == "converge":
            table = run_convergence(cfg)
            print(table.format())
        else:
            hist = run_adaptive(cfg)
            for r in hist.records:
                print(f"iter {r.iter:3d} cells {r.cells:7d} dofs {r.dofs:8d} R {r.R:.3e} err_dG {r.err_dG:.3e} marked {r.marked}")
            print("converged" if hist.converged else "not converged within the iteration limit")
    except (ValueError, KeyError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
