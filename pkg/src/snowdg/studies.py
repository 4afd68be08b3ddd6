"""Manufactured problems, error norms and the four numerical studies."""
from __future__ import annotations

import csv
import time
from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np

from .assembly import (DEFAULT_ETA, DGSpace, assemble_M, assemble_P, assemble_system,
                       evaluate_solution, reference_mass)
from .geometry import KOCH_DIM, invert, reference_charts
from .linsolve import condition_estimate, smallest_generalized_eigs, solve_dense, solve_spd
from .mesh import BOUNDARY, Mesh, build, build_boundary_refined, build_quasi_uniform, rotation_matrix_batch
from .moments import koch_rule, snowflake_rule
from .polybasis import monomial_values, pullback_matrix

#: First ten Dirichlet eigenvalues of the snowflake of diameter 2/sqrt(3).
REFERENCE_EIGENVALUES = np.array([39.348, 97.436, 97.436, 165.406, 165.406,
                                  190.370, 208.608, 272.406, 272.406, 312.353])

CSV_COLUMNS = ("study", "family", "ell", "ellstar", "p", "n_elements", "n_dofs", "h_max",
               "h_boundary", "err_dg", "err_l2", "rate_dg", "rate_l2", "cond", "eig_index",
               "lambda", "lambda_scaled", "lambda_ref", "rel_err")


@dataclass
class ManufacturedProblem:
    u: Callable
    grad_u: Callable
    f: Callable
    boundary_max: float = 0.0
    name: str = ""


def gaussian_problem(sigma: float = 0.1) -> ManufacturedProblem:
    """``u = exp(-|x|^2 / sigma^2)`` and ``f = -lap u``."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    s2 = sigma * sigma

    def u(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-(x[..., 0] ** 2 + x[..., 1] ** 2) / s2)

    def grad_u(x):
        x = np.asarray(x, dtype=float)
        return (-2.0 / s2) * x * u(x)[..., None]

    def f(x):
        x = np.asarray(x, dtype=float)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return (4.0 / s2 - 4.0 * r2 / s2 ** 2) * u(x)

    # the boundary stays at least 1/sqrt(3) from the origin
    bmax = float(np.exp(-1.0 / (3.0 * s2)))
    return ManufacturedProblem(u, grad_u, f, bmax, f"gaussian(sigma={sigma:g})")


def constant_source(c: float = 1.0) -> Callable:
    return lambda x: np.full(np.shape(x)[:-1], float(c))


# -- errors --------------------------------------------------------------------

def _chunk_iter(n: int, per: int):
    per = max(1, per)
    for lo in range(0, n, per):
        yield slice(lo, min(n, lo + per))


def dg_error(space: DGSpace, coeffs, problem: ManufacturedProblem, quad_level: int = 4,
             koch_level: int = 6) -> tuple[float, float]:
    """``(||u - u_h||_DG, ||u - u_h||_L2)``.

    Volume terms by the composite barycentre rule, interior jumps exactly
    (``u`` is continuous so only the jump of ``u_h`` remains), boundary
    terms by the composite Koch rule on each boundary face.
    """
    mesh = space.mesh
    coeffs = np.asarray(coeffs, dtype=float)
    nodes, w = snowflake_rule(quad_level)
    grad_sq = l2_sq = 0.0
    for sl in _chunk_iter(mesh.n_elements, 2_000_000 // len(w)):
        sub = _subspace(space, sl)
        vals, grads = evaluate_solution(sub, space.local(coeffs)[sl].ravel(), nodes)
        x = _points(mesh, nodes, sl)
        s2 = mesh.scale[sl][:, None] ** 2
        l2_sq += float(np.sum(s2 * w * (problem.u(x) - vals) ** 2))
        grad_sq += float(np.sum(s2 * w * np.sum((problem.grad_u(x) - grads) ** 2, axis=-1)))

    jump_sq = float(coeffs @ (assemble_P(space, 1.0, interior=True, boundary=False) @ coeffs))

    fa = mesh.faces
    bsel = np.nonzero(fa["kind"] == BOUNDARY)[0]
    knodes, kw = koch_rule(koch_level)
    gam = reference_charts().face_charts
    bnd_sq = 0.0
    loc = space.local(coeffs)
    for slot in range(1, 7):
        fs = bsel[fa["slot_minus"][bsel] == slot]
        if fs.size == 0:
            continue
        ref = gam[slot - 1](knodes)
        phi = monomial_values(ref, space.p)
        els = fa["minus"][fs]
        x = _points(mesh, ref, els)
        uh = loc[els] @ phi.T
        # the h_F^-d weight cancels against H^d(F) = h_F^d
        bnd_sq += float(np.sum(kw * (problem.u(x) - uh) ** 2))
    err_dg = np.sqrt(max(grad_sq, 0.0) + max(jump_sq, 0.0) + bnd_sq)
    return float(err_dg), float(np.sqrt(l2_sq))


def _points(mesh: Mesh, ref, idx) -> np.ndarray:
    rmat = rotation_matrix_batch(mesh.rot[idx]) * mesh.scale[idx][:, None, None]
    return mesh.center[idx][:, None, :] + np.einsum("kij,qj->kqi", rmat, ref)


class _SubMesh:
    def __init__(self, mesh: Mesh, sl):
        self.rot = mesh.rot[sl]
        self.scale = mesh.scale[sl]


class _SubSpace:
    def __init__(self, space: DGSpace, sl):
        self.mesh = _SubMesh(space.mesh, sl)
        self.p = space.p
        self.n_local = space.n_local

    def local(self, coeffs):
        return np.asarray(coeffs).reshape(-1, self.n_local)


def _subspace(space: DGSpace, sl):
    return _SubSpace(space, sl)


def _ancestors(coarse: Mesh, fine: Mesh) -> np.ndarray:
    lookup = {w: k for k, w in enumerate(coarse.words)}
    anc = np.empty(fine.n_elements, dtype=int)
    for k, w in enumerate(fine.words):
        for cut in range(len(w), -1, -1):
            j = lookup.get(w[:cut])
            if j is not None:
                anc[k] = j
                break
        else:
            raise ValueError("fine mesh does not refine the coarse mesh")
    return anc


def increment_error(space_coarse: DGSpace, coeffs_coarse, space_fine: DGSpace, coeffs_fine) -> float:
    """``||u_coarse - u_fine||_L2`` exactly, element by element on the fine mesh."""
    if space_coarse.p != space_fine.p:
        raise ValueError("spaces must share the polynomial degree")
    cm, fm = space_coarse.mesh, space_fine.mesh
    anc = _ancestors(cm, fm)
    cc = space_coarse.local(coeffs_coarse)
    cf = space_fine.local(coeffs_fine)
    mhat = reference_mass(space_fine.p)
    total = 0.0
    for k in range(fm.n_elements):
        j = anc[k]
        if cm.words[j] == fm.words[k]:
            d = cc[j] - cf[k]
        else:
            rel = invert(cm.chart(j)) @ fm.chart(k)
            d = pullback_matrix(rel, space_fine.p, cache=False) @ cc[j] - cf[k]
        total += fm.scale[k] ** 2 * float(d @ mhat @ d)
    return float(np.sqrt(max(total, 0.0)))


# -- studies -------------------------------------------------------------------

@dataclass
class StudyRow:
    study: str
    family: str
    ell: int
    ellstar: int
    p: int
    n_elements: int
    n_dofs: int
    h_max: float | None = None
    h_boundary: float | None = None
    err_dg: float | None = None
    err_l2: float | None = None
    rate_dg: float | None = None
    rate_l2: float | None = None
    cond: float | None = None
    eig_index: int | None = None
    lambda_: float | None = None
    lambda_scaled: float | None = None
    lambda_ref: float | None = None
    rel_err: float | None = None

    def as_csv(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        out = {}
        for key in CSV_COLUMNS:
            v = d[key]
            if v is None:
                out[key] = ""
            elif isinstance(v, float):
                out[key] = f"{v:.17g}"
            else:
                out[key] = str(v)
        return out


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow(r.as_csv())


def loglog_slope(x, y, last: int | None = 3) -> float:
    """Least-squares slope of ``log y`` against ``log x`` over the last ``last`` points."""
    x, y = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    if last:
        x, y = x[-last:], y[-last:]
    return float(np.polyfit(x, y, 1)[0])


def _boundary_h(mesh: Mesh) -> float:
    fa = mesh.faces
    own = fa["minus"][fa["kind"] == BOUNDARY]
    return float(mesh.h[own].max())


def _solve(space: DGSpace, f, eta: float, quad_level: int, tol: float = 1e-12):
    a, b = assemble_system(space, eta, f, quad_level)
    if space.n_dofs <= 4000:
        return solve_dense(a, b)
    x, _ = solve_spd(a, b, tol=tol, block=space.n_local)
    return x


def run_convergence(sigma: float = 0.1, p: int = 1, ell_max: int = 6, eta: float = DEFAULT_ETA,
                    quad_level: int = 4, ell_min: int = 0, log: Callable | None = None) -> list[StudyRow]:
    prob = gaussian_problem(sigma)
    rows = []
    for ell in range(ell_min, ell_max + 1):
        mesh = build_quasi_uniform(ell)
        space = DGSpace(mesh, p)
        x = _solve(space, prob.f, eta, quad_level)
        edg, el2 = dg_error(space, x, prob, quad_level)
        row = StudyRow("convergence", "quasi_uniform", ell, 0, p, mesh.n_elements, space.n_dofs,
                       h_max=float(mesh.h.max()), h_boundary=_boundary_h(mesh), err_dg=edg, err_l2=el2)
        if rows:
            prev = rows[-1]
            lh = np.log(prev.h_max / row.h_max)
            row.rate_dg = float(np.log(prev.err_dg / edg) / lh)
            row.rate_l2 = float(np.log(prev.err_l2 / el2) / lh)
        rows.append(row)
        if log:
            log(row)
    return rows


def convergence_rates(rows: list[StudyRow], last: int = 4) -> tuple[float, float]:
    """Least-squares rates over the last ``last`` rows (three refinements for ``last = 4``)."""
    h = [r.h_max for r in rows]
    return (loglog_slope(h, [r.err_dg for r in rows], last),
            loglog_slope(h, [r.err_l2 for r in rows], last))


def increment_sequence(family: str, ell: int | None = None, ell_max: int = 7,
                       ellstar_max: int = 3) -> list[Mesh]:
    if family in ("quasi", "quasi_uniform"):
        return [build_quasi_uniform(k) for k in range(0, ell_max + 1)]
    if family in ("boundary", "boundary_refined"):
        return [build_boundary_refined(ell, k) for k in range(0, ellstar_max + 1)]
    raise ValueError(f"unknown family {family!r}")


def run_increments(p: int = 2, family: str = "quasi", ell: int = 3, ell_max: int = 7,
                   ellstar_max: int = 3, eta: float = DEFAULT_ETA, quad_level: int = 4,
                   log: Callable | None = None) -> list[StudyRow]:
    """Increment norms ``||u_{k+1} - u_k||_L2`` for ``f = 1``, reported on the coarser mesh."""
    meshes = increment_sequence(family, ell, ell_max, ellstar_max)
    f = constant_source(1.0)
    sols = []
    for mesh in meshes:
        space = DGSpace(mesh, p)
        sols.append((space, _solve(space, f, eta, quad_level)))
    rows = []
    for (sc, xc), (sf, xf) in zip(sols[:-1], sols[1:]):
        inc = increment_error(sc, xc, sf, xf)
        m = sc.mesh
        row = StudyRow("increments", m.family, m.ell, m.ellstar, p, m.n_elements, sc.n_dofs,
                       h_max=float(m.h.max()), h_boundary=_boundary_h(m), err_l2=inc)
        if rows:
            row.rate_l2 = float(np.log(rows[-1].err_l2 / inc) / np.log(rows[-1].n_dofs / row.n_dofs))
        rows.append(row)
        if log:
            log(row)
    return rows


def run_conditioning(p: int = 1, ell_max: int = 5, eta: float = DEFAULT_ETA, boundary_ell: int | None = None,
                     ellstar_max: int = 0, log: Callable | None = None) -> list[StudyRow]:
    meshes = [build_quasi_uniform(k) for k in range(ell_max + 1)]
    if boundary_ell is not None:
        meshes += [build_boundary_refined(boundary_ell, k) for k in range(1, ellstar_max + 1)]
    rows = []
    for mesh in meshes:
        space = DGSpace(mesh, p)
        a, _ = assemble_system(space, eta)
        row = StudyRow("conditioning", mesh.family, mesh.ell, mesh.ellstar, p, mesh.n_elements,
                       space.n_dofs, h_max=float(mesh.h.max()), h_boundary=_boundary_h(mesh),
                       cond=condition_estimate(a, block=space.n_local))
        rows.append(row)
        if log:
            log(row)
    return rows


def run_eigen(family: str = "boundary", ell: int = 4, ellstar: int = 2, p: int = 2, k: int = 10,
              eta: float = DEFAULT_ETA, tol: float = 1e-10) -> list[StudyRow]:
    mesh = build(family, ell, ellstar)
    space = DGSpace(mesh, p)
    a, _ = assemble_system(space, eta)
    lam, _ = smallest_generalized_eigs(a, assemble_M(space), k, tol)
    rows = []
    for i, val in enumerate(lam, start=1):
        ref = float(REFERENCE_EIGENVALUES[i - 1]) if i <= len(REFERENCE_EIGENVALUES) else None
        scaled = 3.0 * float(val)
        rows.append(StudyRow("eigs", mesh.family, mesh.ell, mesh.ellstar, p, mesh.n_elements,
                             space.n_dofs, h_max=float(mesh.h.max()), h_boundary=_boundary_h(mesh),
                             eig_index=i, lambda_=float(val), lambda_scaled=scaled, lambda_ref=ref,
                             rel_err=None if ref is None else abs(scaled - ref) / ref))
    return rows


__all__ = ["ManufacturedProblem", "gaussian_problem", "constant_source", "dg_error",
           "increment_error", "StudyRow", "write_csv", "loglog_slope", "run_convergence",
           "convergence_rates", "run_increments", "run_conditioning", "run_eigen",
           "REFERENCE_EIGENVALUES", "CSV_COLUMNS"]
