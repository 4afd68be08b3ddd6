"""Command-line entry point: ``python -m snowdg <command> ...``.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 mesh validation failure.
"""
from __future__ import annotations

import argparse
import sys

from .assembly import DEFAULT_ETA, DGSpace, assemble_M, assemble_system, export_solution
from .linsolve import NumericalFailure, check_positive_definite, smallest_generalized_eigs, solve_spd
from .mesh import MeshError, build, export_mesh, lqu_check
from .moments import moment_csv_rows, region_table
from .studies import (REFERENCE_EIGENVALUES, constant_source, gaussian_problem,
                      run_conditioning, run_convergence, run_eigen, run_increments, write_csv)

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_MESH = 0, 1, 2, 3
FAMILY_NAMES = {"uniform": "uniform", "quasi": "quasi_uniform", "boundary": "boundary_refined"}


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def parse_rhs(text: str):
    """``constant:c`` or ``gaussian:sigma=s`` -> (source function, problem or None)."""
    kind, _, arg = text.partition(":")
    try:
        if kind == "constant":
            return constant_source(float(arg or 1.0)), None
        if kind == "gaussian":
            key, _, val = arg.partition("=")
            if key != "sigma":
                raise ValueError
            prob = gaussian_problem(float(val))
            return prob.f, prob
    except ValueError:
        pass
    raise UsageError(f"bad --rhs value {text!r}; expected constant:c or gaussian:sigma=s")


def _mesh_args(p: argparse.ArgumentParser, ellstar_default: int = 0):
    p.add_argument("--family", choices=sorted(FAMILY_NAMES), default="quasi",
                   help="uniform T_l, quasi-uniform T'_l, or boundary-refined T'_{l,l*}")
    p.add_argument("--ell", type=int, default=2, help="refinement level l")
    p.add_argument("--ellstar", type=int, default=ellstar_default,
                   help="boundary refinement passes l* (boundary family only)")


def _disc_args(p: argparse.ArgumentParser):
    p.add_argument("--p", type=int, choices=(1, 2), default=1, help="polynomial degree")
    p.add_argument("--eta", type=float, default=DEFAULT_ETA, help="penalty parameter (default 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snowdg", description="SIP-DG on the Koch snowflake.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    m = sub.add_parser("mesh", help="build a mesh and write it as JSON")
    _mesh_args(m)
    m.add_argument("--out", required=True, help="output mesh file")
    m.add_argument("--polygons", type=int, default=None, metavar="DEPTH",
                   help="also write per-element prefractal polygons at this depth")

    mo = sub.add_parser("moments", help="print a moment table as CSV")
    mo.add_argument("--region", choices=("snowflake", "koch", "wedge", "triangle"), default="snowflake")
    mo.add_argument("--max-deg", type=int, default=4, dest="max_deg")
    mo.add_argument("--wedge", type=int, default=1, help="wedge index 1..6 (region wedge)")
    mo.add_argument("--out", default=None, help="output CSV (default stdout)")

    s = sub.add_parser("solve", help="solve the Dirichlet problem")
    _mesh_args(s)
    _disc_args(s)
    s.add_argument("--rhs", default="constant:1", help="constant:c or gaussian:sigma=s")
    s.add_argument("--quad-level", type=int, default=4, dest="quad_level",
                   help="composite barycentre level for the load vector")
    s.add_argument("--tol", type=float, default=1e-10, help="CG tolerance")
    s.add_argument("--out", default=None, help="solution file (JSON)")

    e = sub.add_parser("eigs", help="smallest Dirichlet eigenvalues")
    _mesh_args(e)
    _disc_args(e)
    e.add_argument("--k", type=int, default=10, help="number of eigenvalues")
    e.add_argument("--out", default=None, help="CSV output (default stdout)")

    st = sub.add_parser("study", help="run one of the numerical studies")
    st.add_argument("kind", choices=("convergence", "increments", "conditioning", "eigs"))
    st.add_argument("--family", choices=sorted(FAMILY_NAMES), default=None,
                    help="mesh family (increments: quasi; eigs: boundary by default)")
    st.add_argument("--ell", type=int, default=None, help="max level (quasi) or base level (boundary)")
    st.add_argument("--ellstar", type=int, default=None, help="max boundary passes")
    st.add_argument("--p", type=int, choices=(1, 2), default=None)
    st.add_argument("--eta", type=float, default=DEFAULT_ETA)
    st.add_argument("--sigma", type=float, default=0.1, help="Gaussian width (convergence)")
    st.add_argument("--k", type=int, default=10)
    st.add_argument("--out", required=True, help="output CSV")
    return parser


def _build_mesh(args):
    if args.ell < 0 or args.ellstar < 0:
        raise UsageError("--ell and --ellstar must be nonnegative")
    if args.family != "boundary" and args.ellstar:
        raise UsageError("--ellstar only applies to --family boundary")
    return build(FAMILY_NAMES[args.family], args.ell, args.ellstar)


def _fmt(x) -> str:
    return f"{x:.17g}"


def cmd_mesh(args) -> int:
    mesh = _build_mesh(args)
    report = lqu_check(mesh)
    if not report.ok:
        print(f"mesh validation failed: {report.message}", file=sys.stderr)
        return EXIT_MESH
    export_mesh(mesh, args.out, polygon_depth=args.polygons)
    print(f"{mesh.n_elements} elements, {mesh.n_faces} faces -> {args.out}")
    return EXIT_OK


def cmd_moments(args) -> int:
    if args.region in ("wedge", "triangle") and args.max_deg > 2:
        raise UsageError(f"{args.region} moments are available to degree 2")
    table = region_table(args.region, args.max_deg, args.wedge)
    lines = ["region,a,b,value"] + [r for r in moment_csv_rows(table) if _deg(r) <= args.max_deg]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _deg(row: str) -> int:
    _, a, b, _ = row.split(",")
    return int(a) + int(b)


def _emit(text: str, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    f, _ = parse_rhs(args.rhs)
    if not args.eta > 0:
        raise UsageError("--eta must be positive")
    mesh = _build_mesh(args)
    space = DGSpace(mesh, args.p)
    a, b = assemble_system(space, args.eta, f, args.quad_level)
    if space.n_dofs <= 3000:
        check_positive_definite(a)
    x, rep = solve_spd(a, b, tol=args.tol, block=space.n_local)
    if args.out:
        export_solution(space, x, args.out)
    print(f"elements {mesh.n_elements} dofs {space.n_dofs} iterations {rep.iterations} "
          f"residual {_fmt(rep.residual)}")
    return EXIT_OK


def cmd_eigs(args) -> int:
    mesh = _build_mesh(args)
    space = DGSpace(mesh, args.p)
    a, _ = assemble_system(space, args.eta)
    lam, _ = smallest_generalized_eigs(a, assemble_M(space), args.k)
    lines = ["index,lambda,lambda_scaled,lambda_ref"]
    for i, v in enumerate(lam, start=1):
        ref = _fmt(REFERENCE_EIGENVALUES[i - 1]) if i <= len(REFERENCE_EIGENVALUES) else ""
        lines.append(f"{i},{_fmt(v)},{_fmt(3 * v)},{ref}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_study(args) -> int:
    log = lambda r: print(f"{r.study} {r.family} l={r.ell} l*={r.ellstar} N={r.n_dofs}", file=sys.stderr)
    if args.kind == "convergence":
        rows = run_convergence(args.sigma, args.p or 1, 6 if args.ell is None else args.ell, args.eta, log=log)
    elif args.kind == "increments":
        fam = FAMILY_NAMES[args.family or "quasi"]
        if fam == "quasi_uniform":
            rows = run_increments(args.p or 2, "quasi", ell_max=7 if args.ell is None else args.ell,
                                  eta=args.eta, log=log)
        elif fam == "boundary_refined":
            rows = run_increments(args.p or 2, "boundary", ell=3 if args.ell is None else args.ell,
                                  ellstar_max=3 if args.ellstar is None else args.ellstar,
                                  eta=args.eta, log=log)
        else:
            raise UsageError("increments need --family quasi or boundary")
    elif args.kind == "conditioning":
        rows = run_conditioning(args.p or 1, 5 if args.ell is None else args.ell, args.eta,
                                boundary_ell=3 if args.ellstar else None, ellstar_max=args.ellstar or 0,
                                log=log)
    else:
        fam = FAMILY_NAMES[args.family or "boundary"]
        ell = 4 if args.ell is None else args.ell
        ellstar = (2 if fam == "boundary_refined" else 0) if args.ellstar is None else args.ellstar
        rows = run_eigen(fam, ell, ellstar, args.p or 2, args.k, args.eta)
    write_csv(rows, args.out)
    print(f"{len(rows)} rows -> {args.out}")
    return EXIT_OK


COMMANDS = {"mesh": cmd_mesh, "moments": cmd_moments, "solve": cmd_solve, "eigs": cmd_eigs,
            "study": cmd_study}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:          # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MeshError as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return EXIT_MESH
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
