"""Command-line interface.

Subcommands::

    verify-paper [--tol T] [--seed S]
    eval   --manifest M --quantity Q [--point "x,y"]
    check  --manifest M --samples N [--seed S] [--tol T]
    solve  --manifest M --grid AxB --bc EXPR --mode base|deformed --out F.csv

JSON goes to stdout and diagnostics to stderr.  Exit codes: 0 pass,
1 check failure, 2 input error, 3 validity violation, 4 solver
non-convergence.  ``GEO_SEED`` supplies the seed when no flag is given.
"""
from __future__ import annotations

import argparse
import itertools
import json
import os
import sys

import numpy as np

from . import __version__, chi, deform, exprlang
from .atlas import sample_points
from .checks import run_check, summarize, verify_paper
from .deform import ValidityViolation
from .geometry import DomainError, NotPositiveDefinite, norm2
from .manifest import ManifestError, load_manifest

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_VALIDITY, EXIT_NONCONV = 0, 1, 2, 3, 4

EVAL_QUANTITIES = {
    "tension_c": lambda D, p: deform.tension_c(D, p),
    "tension_d": lambda D, p: deform.tension_d(D, p),
    "residual_d": lambda D, p: deform.residual_d(D, p),
    "deformed_laplacian": lambda D, p: deform.deformed_laplacian(D, p),
    "chi": lambda D, p: chi.chi_at(D, p),
    "trace_chi": lambda D, p: chi.trace_chi(D, p),
    "div_chi": lambda D, p: chi.div_chi(D, p),
    "div_chi_gradf": lambda D, p: chi.div_chi_gradf(D, p),
    "bochner_residual": lambda D, p: chi.bochner_residual(D, p),
}


def _json(obj) -> str:
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, np.ndarray):
            return clean(o.tolist())
        if isinstance(o, (np.floating, float)):
            o = float(o)
            return o if np.isfinite(o) else None
        if isinstance(o, np.integer):
            return int(o)
        return o

    return json.dumps(clean(obj), sort_keys=False)


def _seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get("GEO_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ManifestError(f"GEO_SEED must be an integer, got {env!r}") from None


def _report(command: str, seed, tol, records) -> dict:
    return {
        "tool": "harmid",
        "version": __version__,
        "command": command,
        "seed": seed,
        "tolerance_override": tol,
        "records": [r.as_dict() for r in records],
        "summary": summarize(records),
    }


def _parse_point(text: str, dim: int) -> np.ndarray:
    try:
        p = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ManifestError(f"cannot parse point {text!r}", "--point") from None
    if p.shape != (dim,):
        raise ManifestError(f"point needs {dim} coordinates", "--point")
    return p[None, :]


def cmd_verify_paper(args) -> int:
    seed = _seed(args.seed)
    records = verify_paper(seed, args.tol)
    print(_json(_report("verify-paper", seed, args.tol, records)))
    failed = [r.id for r in records if not r.passed]
    for rid in failed:
        print(f"FAIL {rid}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_eval(args) -> int:
    M = load_manifest(args.manifest)
    if args.quantity not in EVAL_QUANTITIES:
        raise ManifestError(f"unknown quantity; choose from {sorted(EVAL_QUANTITIES)}", "--quantity")
    pts = _parse_point(args.point, M.dim) if args.point else M.points
    if pts is None or len(pts) == 0:
        raise ManifestError("no evaluation points (manifest 'points' or --point)")
    D = M.deformed()
    D.chart.require(pts)
    D.check_validity(pts)
    s = norm2(D.f, D.base, pts)
    vals = EVAL_QUANTITIES[args.quantity](D, pts)
    for k, p in enumerate(pts):
        print(_json({"point": p, "quantity": args.quantity, "value": np.asarray(vals)[k], "s": s[k]}))
    return EXIT_OK


def _lattice(M, per_axis: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(M.box_lower, M.box_upper)]
    return np.array(list(itertools.product(*axes)))


def cmd_check(args) -> int:
    M = load_manifest(args.manifest)
    if args.samples < 1:
        raise ManifestError("--samples must be >= 1", "--samples")
    if not (np.all(np.isfinite(M.box_lower)) and np.all(np.isfinite(M.box_upper))):
        raise ManifestError("sampling needs a finite domain box", "domain")
    seed = args.seed if args.seed is not None else (M.seed if M.seed is not None else _seed(None))
    D = M.deformed()
    pts = sample_points(D.chart, M.box_lower, M.box_upper, args.samples, seed)
    scan = _lattice(M, 17 if M.dim <= 3 else 5)
    scan = scan[D.chart.contains(scan)]
    D.check_validity(np.concatenate([pts, scan]))
    tol = args.tol if args.tol is not None else M.tolerances.get("check")
    records = run_check(D, pts, tol)
    print(_json(_report("check", seed, tol, records)))
    failed = [r.id for r in records if not r.passed]
    for rid in failed:
        print(f"FAIL {rid}", file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def _parse_grid(text: str):
    try:
        a, b = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ManifestError(f"grid must look like 65x65, got {text!r}", "--grid") from None
    return a, b


def cmd_solve(args) -> int:
    from .solver import GridProblem, SolverNonConvergence, sample_report, solve

    M = load_manifest(args.manifest, need_field=False)
    if M.dim != 2:
        raise ManifestError("solve needs a 2-D manifest", "dimension")
    nx, ny = _parse_grid(args.grid)
    try:
        bc = exprlang.parse(args.bc)
    except exprlang.ExprSyntaxError as exc:
        raise ManifestError(str(exc), f"--bc offset {exc.offset}") from None
    tol = M.tolerances
    P = GridProblem(
        M.metric, (M.box_lower[0], M.box_upper[0]), (M.box_lower[1], M.box_upper[1]), nx, ny, bc,
        mode=args.mode, residual_tol=tol.get("residual", 1e-8), picard_tol=tol.get("picard", 1e-11),
        theta=args.theta,
    )
    code = EXIT_OK
    try:
        sol = solve(P)
    except SolverNonConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        sol = exc.solution
        code = EXIT_NONCONV
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(sample_report(sol))
    print(_json(sol.summary()))
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="harmid", description="Harmonic identity maps under g - df (x) df.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-paper", help="run the built-in verification suite")
    p.add_argument("--tol", type=float, default=None, help="override every numeric tolerance")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_verify_paper)

    p = sub.add_parser("eval", help="evaluate a quantity at manifest points")
    p.add_argument("--manifest", required=True)
    p.add_argument("--quantity", required=True, choices=sorted(EVAL_QUANTITIES))
    p.add_argument("--point", help='comma-separated coordinates, e.g. "1,2"')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="identity battery at random domain points")
    p.add_argument("--manifest", required=True)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", help="Dirichlet problem on a 2-D grid")
    p.add_argument("--manifest", required=True)
    p.add_argument("--grid", required=True, help="nodes per axis, e.g. 65x65")
    p.add_argument("--bc", required=True, help="boundary data expression")
    p.add_argument("--mode", choices=("base", "deformed"), default="base")
    p.add_argument("--theta", type=float, default=0.5, help="Picard damping")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidityViolation as exc:
        print(f"validity violation: {exc}", file=sys.stderr)
        return EXIT_VALIDITY
    except (ManifestError, exprlang.ExprSyntaxError, exprlang.UnboundVariable, DomainError,
            NotPositiveDefinite, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
