"""Run the numerical studies and write one CSV per study.

    python scripts/run_studies.py --out results
    python scripts/run_studies.py --only eigs conditioning
"""
import argparse
import sys
import time
from pathlib import Path

from snowdg.studies import (convergence_rates, loglog_slope, run_conditioning, run_convergence,
                            run_eigen, run_increments, write_csv)


def _log(row):
    print(f"  {row.study} {row.family} l={row.ell} l*={row.ellstar} p={row.p} N={row.n_dofs}",
          file=sys.stderr)


def convergence(out: Path, args):
    for p in (1, 2):
        rows = run_convergence(args.sigma, p, ell_max=args.ell_max, log=_log)
        write_csv(rows, out / f"convergence_p{p}.csv")
        rdg, rl2 = convergence_rates(rows)
        print(f"convergence p={p}: DG rate {rdg:.3f}, L2 rate {rl2:.3f}")


def increments(out: Path, args):
    quasi = run_increments(2, "quasi", ell_max=7, log=_log)
    bnd = run_increments(2, "boundary", ell=3, ellstar_max=3, log=_log)
    write_csv(quasi, out / "increments_quasi.csv")
    write_csv(bnd, out / "increments_boundary.csv")
    for name, rows in (("quasi-uniform", quasi), ("boundary-refined", bnd)):
        s = loglog_slope([r.n_dofs for r in rows], [r.err_l2 for r in rows], last=None)
        print(f"increments {name}: slope {s:.3f}")


def conditioning(out: Path, args):
    rows = run_conditioning(1, 5, boundary_ell=3, ellstar_max=2, log=_log)
    write_csv(rows, out / "conditioning.csv")
    q = [r for r in rows if r.family == "quasi_uniform"]
    print(f"conditioning: slope {loglog_slope([r.n_dofs for r in q], [r.cond for r in q], last=None):.3f}")


def eigs(out: Path, args):
    rows = run_eigen("boundary", 4, 2, 2, k=10)
    write_csv(rows, out / "eigs.csv")
    print(f"eigs: max rel err {max(r.rel_err for r in rows):.2%}")


STUDIES = {"convergence": convergence, "increments": increments, "conditioning": conditioning,
           "eigs": eigs}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results", help="output directory")
    ap.add_argument("--only", nargs="+", choices=sorted(STUDIES), default=sorted(STUDIES))
    ap.add_argument("--sigma", type=float, default=0.1)
    ap.add_argument("--ell-max", type=int, default=6, dest="ell_max",
                    help="finest quasi-uniform level of the convergence study")
    args = ap.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.only:
        t0 = time.perf_counter()
        STUDIES[name](out, args)
        print(f"{name} done in {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
