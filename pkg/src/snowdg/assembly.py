"""SIP-DG Galerkin matrix ``A = G + C + C^T + P``, mass matrix and load vector.

Everything is computed on the reference snowflake.  The contribution of a face
depends only on ``(slot_minus, slot_plus, rot_minus - rot_plus)``, so face
blocks are built once per pattern and scattered.

Matrices are ``scipy.sparse`` CSR with DOFs ordered element-major, then by
graded-lex monomial index.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .geometry import SQRT3, Similarity, compose, invert, reference_charts, reference_vertices
from .mesh import BOUNDARY, INTERIOR, Mesh, rotation_matrix_batch
from .moments import koch_moments, segment_gauss, snowflake_moments, snowflake_rule, wedge_moments
from .polybasis import (Poly2, derivative_matrices, exponents, index, monomial_gradients,
                        monomial_values, ndofs, pullback_matrix)

MAX_DEGREE = 2
DEFAULT_ETA = 10.0


@dataclass(frozen=True)
class DGSpace:
    mesh: Mesh
    p: int

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError(f"polynomial degree must be 1 or 2, got {self.p}")
        self.mesh.ensure_faces()

    @property
    def n_local(self) -> int:
        return ndofs(self.p)

    @property
    def n_dofs(self) -> int:
        return self.n_local * self.mesh.n_elements

    def dofs(self, k: int) -> slice:
        return slice(k * self.n_local, (k + 1) * self.n_local)

    def local(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficient vector reshaped to (n_elements, n_local)."""
        return np.asarray(coeffs).reshape(self.mesh.n_elements, self.n_local)


# -- wedge integrals ----------------------------------------------------------

@dataclass(frozen=True)
class WedgeQuadContext:
    """Reference wedge(s) and bounding segments for one side of a face.

    ``segments`` holds ``(k, normal)`` pairs: segment ``S_k = [0, p_k]`` with
    the unit normal pointing out of the wedge region.
    """

    kind: str                 # "down" (one slot) or "up" (two slots)
    slot: int
    wedges: tuple[int, ...]
    segments: tuple[tuple[int, tuple[float, float]], ...]

    def area_fraction(self) -> float:
        return len(self.wedges) / 6.0


def _normal(k: int, clockwise: bool) -> tuple[float, float]:
    x, y = reference_vertices()[k - 1]
    return (y, -x) if clockwise else (-y, x)


def _wrap(k: int) -> int:
    return (k - 1) % 6 + 1


def down_context(slot: int) -> WedgeQuadContext:
    """``W_i`` bounded by ``S_i`` (region lies anticlockwise) and ``S_{i+1}``."""
    i = _wrap(slot)
    j = _wrap(i + 1)
    return WedgeQuadContext("down", i, (i,), ((i, _normal(i, True)), (j, _normal(j, False))))


def up_context(slot: int) -> WedgeQuadContext:
    """``W_j u W_{j+1}`` bounded by ``S_j`` and ``S_{j+2}``."""
    j = _wrap(slot)
    k = _wrap(j + 2)
    return WedgeQuadContext("up", j, (j, _wrap(j + 1)), ((j, _normal(j, True)), (k, _normal(k, False))))


def _region_integral(poly: Poly2, ctx: WedgeQuadContext) -> float:
    if poly.effective_degree > 2:
        raise ValueError(f"wedge integrals are tabulated to degree 2, got {poly.effective_degree}")
    return sum(wedge_moments(w).integrate(poly) for w in ctx.wedges)


def compute_I(w: Poly2, v: Poly2, ctx: WedgeQuadContext, npts: int | None = None) -> float:
    """``int_region (grad w . grad v + lap(w) v) - sum_seg int (dw/dn) v``."""
    if w.degree > MAX_DEGREE or v.degree > MAX_DEGREE:
        if max(w.effective_degree, v.effective_degree) > MAX_DEGREE:
            raise ValueError("wedge integrals support polynomial degree <= 2")
        w, v = w.with_degree(min(w.degree, MAX_DEGREE)), v.with_degree(min(v.degree, MAX_DEGREE))
    deg = max(w.degree, v.degree, 1)
    w, v = w.with_degree(deg), v.with_degree(deg)
    dx, dy = derivative_matrices(deg)
    wx, wy = Poly2(dx @ w.coeffs, deg), Poly2(dy @ w.coeffs, deg)
    vx, vy = Poly2(dx @ v.coeffs, deg), Poly2(dy @ v.coeffs, deg)
    lap = Poly2((dx @ dx + dy @ dy) @ w.coeffs, deg)
    vol = _region_integral(wx * vx + wy * vy + lap * v, ctx)
    npts = npts or deg
    seg = 0.0
    p = reference_vertices()
    for k, n in ctx.segments:
        x, wt = segment_gauss((0.0, 0.0), p[k - 1], npts)
        seg += np.sum(wt * (n[0] * wx(x) + n[1] * wy(x)) * v(x))
    return float(vol - seg)


def compute_I_down(w: Poly2, v: Poly2, ctx: WedgeQuadContext) -> float:
    if ctx.kind != "down":
        raise ValueError("expected a down-wedge context")
    return compute_I(w, v, ctx)


def compute_I_up(w: Poly2, v: Poly2, ctx: WedgeQuadContext) -> float:
    if ctx.kind != "up":
        raise ValueError("expected an up-wedge context")
    return compute_I(w, v, ctx)


@lru_cache(maxsize=None)
def wedge_matrix(kind: str, slot: int, p: int) -> np.ndarray:
    """``B[a, b] = I(mono_a, mono_b)`` for the given wedge context."""
    ctx = down_context(slot) if kind == "down" else up_context(slot)
    n = ndofs(p)
    mono = [Poly2.monomial(a, b, p) for a, b in exponents(p)]
    out = np.array([[compute_I(mono[i], mono[j], ctx, npts=p) for j in range(n)] for i in range(n)])
    out.setflags(write=False)
    return out


# -- reference blocks ----------------------------------------------------------

@lru_cache(maxsize=None)
def _koch_gram(p: int) -> np.ndarray:
    """``K[a, b] = J[mono_a mono_b]`` over the reference Koch curve."""
    table = koch_moments(2 * p)
    ex = exponents(p)
    return np.array([[table.value(a1 + a2, b1 + b2) for a2, b2 in ex] for a1, b1 in ex])


@lru_cache(maxsize=None)
def reference_stiffness(p: int) -> np.ndarray:
    """``int grad mono_i . grad mono_j`` over the reference snowflake."""
    table = snowflake_moments(max(2 * p - 2, 0))
    ex = exponents(p)
    n = len(ex)
    g = np.zeros((n, n))
    for i, (a1, b1) in enumerate(ex):
        for j, (a2, b2) in enumerate(ex):
            v = 0.0
            if a1 and a2:
                v += a1 * a2 * table.value(a1 + a2 - 2, b1 + b2)
            if b1 and b2:
                v += b1 * b2 * table.value(a1 + a2, b1 + b2 - 2)
            g[i, j] = v
    g.setflags(write=False)
    return g


@lru_cache(maxsize=None)
def reference_mass(p: int) -> np.ndarray:
    table = snowflake_moments(2 * p)
    ex = exponents(p)
    m = np.array([[table.value(a1 + a2, b1 + b2) for a2, b2 in ex] for a1, b1 in ex])
    m.setflags(write=False)
    return m


def relative_chart(slot_plus: int, drot: int) -> Similarity:
    """``psi_{K+}^{-1} o psi_{K-}`` for a face pattern (large side mapped into the small frame)."""
    p = reference_vertices()[slot_plus % 6]   # p_{slot_plus + 1}
    return Similarity(SQRT3, drot, (2.0 * p[0], 2.0 * p[1]))


@dataclass(frozen=True)
class FaceBlocks:
    """Per-pattern blocks; rows index test functions, columns trial functions."""

    c_mm: np.ndarray
    c_mn: np.ndarray
    c_nm: np.ndarray
    c_nn: np.ndarray
    p_mm: np.ndarray   # penalty blocks for eta = 1
    p_mn: np.ndarray
    p_nn: np.ndarray


@lru_cache(maxsize=None)
def interior_face_blocks(slot_minus: int, slot_plus: int, drot: int, p: int) -> FaceBlocks:
    bd = wedge_matrix("down", slot_minus, p)
    bu = wedge_matrix("up", slot_plus, p)
    rho = relative_chart(slot_plus, drot)         # m-frame -> n-frame
    q_nm = pullback_matrix(rho, p)                # coeffs of phi^n seen in the m-frame
    q_mn = pullback_matrix(invert(rho), p)        # coeffs of phi^m seen in the n-frame
    # C_{mm} = -1/2 I_down(phi_j^m, phi_i^m), C_{nm} = 1/2 I_down(phi_j^m, phi_i^n), etc.
    c_mm = -0.5 * bd.T
    c_nm = 0.5 * q_nm.T @ bd.T
    c_mn = 0.5 * q_mn.T @ bu.T
    c_nn = -0.5 * bu.T
    gam = reference_charts().face_charts[slot_minus - 1]
    r_m = pullback_matrix(gam, p)
    r_n = pullback_matrix(compose(rho, gam), p)
    k = _koch_gram(p)
    return FaceBlocks(c_mm, c_mn, c_nm, c_nn, r_m.T @ k @ r_m, -(r_m.T @ k @ r_n), r_n.T @ k @ r_n)


@lru_cache(maxsize=None)
def boundary_face_blocks(slot: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    """``(C_mm, P_mm / eta)`` for a boundary face occupying ``slot``."""
    bd = wedge_matrix("down", slot, p)
    r = pullback_matrix(reference_charts().face_charts[slot - 1], p)
    return -bd.T, r.T @ _koch_gram(p) @ r


# -- global assembly -----------------------------------------------------------

def _scatter(space: DGSpace, rows: np.ndarray, cols: np.ndarray, blocks: np.ndarray) -> sp.csr_matrix:
    """Sum dense blocks ``blocks[f]`` into block position ``(rows[f], cols[f])``."""
    n = space.n_local
    if len(rows) == 0:
        return sp.csr_matrix((space.n_dofs, space.n_dofs))
    loc = np.arange(n)
    r = (rows[:, None, None] * n + loc[None, :, None]).repeat(n, axis=2)
    c = (cols[:, None, None] * n + loc[None, None, :]).repeat(n, axis=1)
    mat = sp.coo_matrix((blocks.ravel(), (r.ravel(), c.ravel())), shape=(space.n_dofs, space.n_dofs))
    return mat.tocsr()


def _block_diag(space: DGSpace, blocks: np.ndarray) -> sp.csr_matrix:
    idx = np.arange(space.mesh.n_elements)
    return _scatter(space, idx, idx, blocks)


def _interior_patterns(space: DGSpace):
    fa = space.mesh.faces
    sel = np.nonzero(fa["kind"] == INTERIOR)[0]
    m, n = fa["minus"][sel], fa["plus"][sel]
    drot = (space.mesh.rot[m] - space.mesh.rot[n]) % 12
    keys = np.column_stack([fa["slot_minus"][sel], fa["slot_plus"][sel], drot])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    blocks = [interior_face_blocks(int(a), int(b), int(c), space.p) for a, b, c in uniq]
    return m, n, inv.ravel(), blocks


def _boundary_patterns(space: DGSpace):
    fa = space.mesh.faces
    sel = np.nonzero(fa["kind"] == BOUNDARY)[0]
    return fa["minus"][sel], fa["slot_minus"][sel]


def assemble_G(space: DGSpace) -> sp.csr_matrix:
    g = reference_stiffness(space.p)
    return _block_diag(space, np.broadcast_to(g, (space.mesh.n_elements,) + g.shape))


def assemble_M(space: DGSpace) -> sp.csr_matrix:
    m = reference_mass(space.p)
    s2 = space.mesh.scale ** 2
    return _block_diag(space, s2[:, None, None] * m)


def assemble_C(space: DGSpace) -> sp.csr_matrix:
    m, n, inv, blocks = _interior_patterns(space)
    be, bs = _boundary_patterns(space)
    parts = []
    if len(m):
        stack = lambda attr: np.stack([getattr(b, attr) for b in blocks])[inv]
        parts += [(m, m, stack("c_mm")), (m, n, stack("c_mn")),
                  (n, m, stack("c_nm")), (n, n, stack("c_nn"))]
    if len(be):
        cb = np.stack([boundary_face_blocks(s, space.p)[0] for s in range(1, 7)])
        parts.append((be, be, cb[bs - 1]))
    return _merge(space, parts)


def assemble_P(space: DGSpace, eta: float = DEFAULT_ETA, interior: bool = True,
               boundary: bool = True) -> sp.csr_matrix:
    if not eta > 0:
        raise ValueError("penalty parameter must be positive")
    parts = []
    if interior:
        m, n, inv, blocks = _interior_patterns(space)
        if len(m):
            stack = lambda attr: np.stack([getattr(b, attr) for b in blocks])[inv]
            pmn = stack("p_mn")
            parts += [(m, m, stack("p_mm")), (m, n, pmn),
                      (n, m, np.transpose(pmn, (0, 2, 1))), (n, n, stack("p_nn"))]
    if boundary:
        be, bs = _boundary_patterns(space)
        if len(be):
            pb = np.stack([boundary_face_blocks(s, space.p)[1] for s in range(1, 7)])
            parts.append((be, be, pb[bs - 1]))
    return eta * _merge(space, parts)


def _merge(space: DGSpace, parts) -> sp.csr_matrix:
    if not parts:
        return sp.csr_matrix((space.n_dofs, space.n_dofs))
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    blocks = np.concatenate([p[2] for p in parts])
    return _scatter(space, rows, cols, blocks)


def element_points(mesh: Mesh, ref_pts: np.ndarray, elements=None) -> np.ndarray:
    """Physical images ``psi_K(ref_pts)``, shape (n_elements, n_pts, 2)."""
    idx = np.arange(mesh.n_elements) if elements is None else np.asarray(elements)
    rmat = rotation_matrix_batch(mesh.rot[idx]) * mesh.scale[idx][:, None, None]
    return mesh.center[idx][:, None, :] + np.einsum("kij,qj->kqi", rmat, ref_pts)


def _chunks(n: int, per: int):
    step = max(1, per)
    for lo in range(0, n, step):
        yield np.arange(lo, min(n, lo + step))


def assemble_b(space: DGSpace, f: Callable, quad_level: int = 4) -> np.ndarray:
    """Load vector by the composite barycentre rule on each element."""
    nodes, w = snowflake_rule(quad_level)
    phi = monomial_values(nodes, space.p)          # (Q, Np)
    mesh = space.mesh
    out = np.zeros((mesh.n_elements, space.n_local))
    for idx in _chunks(mesh.n_elements, 2_000_000 // len(w)):
        x = element_points(mesh, nodes, idx)
        fx = np.asarray(f(x), dtype=float).reshape(len(idx), len(w))
        out[idx] = (mesh.scale[idx] ** 2)[:, None] * ((fx * w) @ phi)
    return out.ravel()


def assemble_system(space: DGSpace, eta: float = DEFAULT_ETA, f: Callable | None = None,
                    quad_level: int = 4):
    """``(A_SIP, b)``; ``b`` is zero when ``f`` is None."""
    c = assemble_C(space)
    a = assemble_G(space) + c + c.T + assemble_P(space, eta)
    a = a.tocsr()
    a.sum_duplicates()
    b = np.zeros(space.n_dofs) if f is None else assemble_b(space, f, quad_level)
    return a, b


def interpolate_polynomial(space: DGSpace, poly: Poly2) -> np.ndarray:
    """Coefficients of a global polynomial (degree <= p) in every element basis."""
    if poly.effective_degree > space.p:
        raise ValueError("polynomial degree exceeds the space degree")
    poly = poly.with_degree(space.p)
    mesh = space.mesh
    out = np.empty((mesh.n_elements, space.n_local))
    for k in range(mesh.n_elements):
        out[k] = pullback_matrix(mesh.chart(k), space.p, cache=False) @ poly.coeffs
    return out.ravel()


def evaluate_solution(space: DGSpace, coeffs: np.ndarray, ref_pts: np.ndarray):
    """Values and physical gradients of ``u_h`` at ``psi_K(ref_pts)`` for every element."""
    c = space.local(coeffs)
    phi = monomial_values(ref_pts, space.p)
    dphi = monomial_gradients(ref_pts, space.p)          # (Q, Np, 2)
    vals = c @ phi.T
    gref = np.einsum("kn,qnd->kqd", c, dphi)
    rmat = rotation_matrix_batch(space.mesh.rot)
    grad = np.einsum("kij,kqj->kqi", rmat, gref) / space.mesh.scale[:, None, None]
    return vals, grad


def export_solution(space: DGSpace, coeffs: np.ndarray, path, mesh_ref: str = "") -> None:
    doc = {
        "mesh": mesh_ref or f"{space.mesh.family}:{space.mesh.ell}:{space.mesh.ellstar}",
        "p": space.p,
        "basis": "monomial-graded-lex",
        "coefficients": [[float(f"{v:.17g}") for v in row] for row in space.local(coeffs)],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def dense_symmetry_error(a) -> float:
    d = a - a.T
    amax = abs(a).max()
    return float(abs(d).max() / amax) if amax else 0.0


__all__ = [
    "DGSpace", "WedgeQuadContext", "FaceBlocks", "down_context", "up_context", "compute_I",
    "compute_I_down", "compute_I_up", "wedge_matrix", "reference_stiffness", "reference_mass",
    "relative_chart", "interior_face_blocks", "boundary_face_blocks", "assemble_G", "assemble_C",
    "assemble_P", "assemble_M", "assemble_b", "assemble_system", "interpolate_polynomial",
    "evaluate_solution", "element_points", "export_solution", "DEFAULT_ETA",
]
