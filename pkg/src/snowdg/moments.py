"""Exact monomial moments of the snowflake, its wedges and the Koch curve.

Snowflake and Koch-curve moments come from the self-similarity of the
underlying measure: if ``mu = sum_m w_m (s_m)_# mu`` then for every
polynomial ``f``, ``int f dmu = sum_m w_m int f o s_m dmu``.  Pulling each
monomial back through ``s_m`` gives a linear system that is block triangular
in the total degree, with the zeroth moment fixed by normalisation.

Wedge moments (degree <= 2) use the closed forms for ``W_1`` and the rotation
by ``pi/3`` that carries ``W_i`` onto ``W_{i+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .geometry import (IDENTITY, KOCH_CENTROID, KOCH_DIM, SNOWFLAKE_AREA, SQRT3,
                       Similarity, koch_ifs, snowflake_ifs)
from .polybasis import Poly2, exponents, ndofs, pullback, pullback_matrix

REGIONS = ("snowflake", "wedge", "koch", "triangle")


@dataclass(frozen=True)
class MomentTable:
    """Moments ``int x^a y^b dmu`` over a reference region, graded-lex ordered."""

    region: str
    max_deg: int
    values: np.ndarray
    wedge: int | None = None

    def value(self, a: int, b: int) -> float:
        if a + b > self.max_deg:
            raise ValueError(f"degree {a + b} exceeds table degree {self.max_deg}")
        return float(self.values[(a + b) * (a + b + 1) // 2 + b])

    def items(self):
        for (a, b), v in zip(exponents(self.max_deg), self.values):
            yield a, b, float(v)

    def integrate(self, poly: Poly2) -> float:
        if poly.effective_degree > self.max_deg:
            raise ValueError(
                f"polynomial degree {poly.effective_degree} exceeds {self.region} table degree {self.max_deg}")
        n = min(poly.coeffs.size, self.values.size)
        return float(poly.coeffs[:n] @ self.values[:n])

    @property
    def label(self) -> str:
        return f"wedge{self.wedge}" if self.region == "wedge" else self.region


def _self_similar_moments(maps: list[Similarity], weights: list[float], mass: float,
                          max_deg: int) -> np.ndarray:
    n = ndofs(max_deg)
    op = np.zeros((n, n))
    for s, w in zip(maps, weights):
        op += w * pullback_matrix(s, max_deg).T
    m = np.zeros(n)
    m[0] = mass
    # degree by degree; the diagonal block I - op_nn is nonsingular for n >= 1
    for d in range(1, max_deg + 1):
        lo, hi = ndofs(d - 1), ndofs(d)
        rhs = op[lo:hi, :lo] @ m[:lo]
        m[lo:hi] = np.linalg.solve(np.eye(hi - lo) - op[lo:hi, lo:hi], rhs)
    return m


def self_similarity_residual(table: MomentTable) -> float:
    """Max residual of the self-similarity relations (snowflake or koch tables)."""
    if table.region == "snowflake":
        maps = snowflake_ifs()
        weights = [s.scale ** 2 for s in maps]
    elif table.region == "koch":
        maps, weights = koch_ifs(), [0.25] * 4
    else:
        raise ValueError("only snowflake and koch tables are self-similar")
    op = sum(w * pullback_matrix(s, table.max_deg).T for s, w in zip(maps, weights))
    r = table.values - op @ table.values
    return float(np.max(np.abs(r[1:]), initial=0.0))


@lru_cache(maxsize=None)
def snowflake_moments(max_deg: int = 4) -> MomentTable:
    """Area moments of the reference snowflake."""
    if not 0 <= max_deg <= 12:
        raise ValueError("max_deg must lie in [0, 12]")
    maps = snowflake_ifs()
    vals = _self_similar_moments(maps, [s.scale ** 2 for s in maps], SNOWFLAKE_AREA, max_deg)
    vals.setflags(write=False)
    return MomentTable("snowflake", max_deg, vals)


@lru_cache(maxsize=None)
def koch_moments(max_deg: int = 4) -> MomentTable:
    """Moments of the normalised Hausdorff measure on the Koch curve."""
    if not 0 <= max_deg <= 12:
        raise ValueError("max_deg must lie in [0, 12]")
    vals = _self_similar_moments(koch_ifs(), [0.25] * 4, 1.0, max_deg)
    vals.setflags(write=False)
    return MomentTable("koch", max_deg, vals)


# W_1 closed forms, degree <= 2, graded-lex: 1, x, y, x^2, xy, y^2
_W1 = np.array([SQRT3 / 5.0, 11.0 / 60.0, 0.0,
                281.0 * SQRT3 / 4400.0, 0.0, 39.0 * SQRT3 / 4400.0])


@lru_cache(maxsize=None)
def wedge_moments(i: int) -> MomentTable:
    """Area moments (degree <= 2) of the reference wedge ``W_i``, ``i = 1..6``."""
    if not 1 <= i <= 6:
        raise ValueError(f"wedge index must be in 1..6, got {i}")
    vals = _W1.copy()
    c, s = 0.5, SQRT3 / 2.0
    for _ in range(i - 1):
        one, x, y, xx, xy, yy = vals
        vals = np.array([
            one,
            c * x - s * y,
            s * x + c * y,
            c * c * xx - 2 * c * s * xy + s * s * yy,
            c * s * xx + (c * c - s * s) * xy - c * s * yy,
            s * s * xx + 2 * c * s * xy + c * c * yy,
        ])
    vals.setflags(write=False)
    return MomentTable("wedge", 2, vals, wedge=i)


def triangle_moments() -> MomentTable:
    """Moments (degree <= 2) of ``T = {0 <= x <= 1/sqrt3, |y| <= x/sqrt3}``."""
    # int_0^{1/sqrt3} 2 x^a (x/sqrt3)^(b+1)/(b+1) dx for even b, zero for odd b
    vals = []
    for a, b in exponents(2):
        if b % 2:
            vals.append(0.0)
            continue
        k = a + b + 2
        vals.append(2.0 / (b + 1) / SQRT3 ** (b + 1) * (1.0 / SQRT3) ** k / k)
    return MomentTable("triangle", 2, np.array(vals))


def region_table(region: str, max_deg: int = 4, wedge: int = 1) -> MomentTable:
    if region == "snowflake":
        return snowflake_moments(max_deg)
    if region == "koch":
        return koch_moments(max_deg)
    if region == "wedge":
        return wedge_moments(wedge)
    if region == "triangle":
        return triangle_moments()
    raise ValueError(f"unknown region {region!r}")


def integrate_poly_region(poly: Poly2, table: MomentTable, pullback_map: Similarity | None = None) -> float:
    """``int_region poly o pullback_map`` exactly, as a combination of table entries."""
    if pullback_map is not None:
        poly = pullback(poly, pullback_map)
    return table.integrate(poly)


def polygon_moments(vertices, max_deg: int) -> np.ndarray:
    """Exact area moments of a simple polygon (Green's theorem, Gauss on edges)."""
    v = np.asarray(vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    t, wt = np.polynomial.legendre.leggauss(max_deg // 2 + 2)
    t, wt = 0.5 * (t + 1.0), 0.5 * wt
    x = v[:, None, 0] + t * (w[:, None, 0] - v[:, None, 0])
    y = v[:, None, 1] + t * (w[:, None, 1] - v[:, None, 1])
    dy = (w[:, 1] - v[:, 1])[:, None]
    out = []
    for a, b in exponents(max_deg):
        out.append(np.sum(wt * x ** (a + 1) * y ** b * dy) / (a + 1))
    return np.array(out)


def segment_gauss(a, b, npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on the segment ``[a, b]``."""
    if npts < 1:
        raise ValueError("npts must be positive")
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    t, w = np.polynomial.legendre.leggauss(npts)
    t = 0.5 * (t + 1.0)
    nodes = a + t[:, None] * (b - a)
    return nodes, 0.5 * w * np.linalg.norm(b - a)


# -- composite barycentre rules ----------------------------------------------

def word_charts(maps: list[Similarity], level: int):
    """Compositions ``m_{w1} o ... o m_{wl}`` over all words, lexicographic.

    Returns ``(scale, rot, shift)`` arrays.
    """
    from .geometry import rotation_matrix

    scale = np.ones(1)
    rot = np.zeros(1, dtype=int)
    shift = np.zeros((1, 2))
    rots = [rotation_matrix(k) for k in range(12)]
    for _ in range(level):
        ns, nr, nt = [], [], []
        for s in maps:
            r = np.stack([rots[k] for k in rot])
            nt.append(shift + scale[:, None] * np.einsum("kij,j->ki", r, s.offset))
            ns.append(scale * s.scale)
            nr.append((rot + s.rot) % 12)
        # interleave so that words stay in lexicographic order
        scale = np.stack(ns, axis=1).ravel()
        rot = np.stack(nr, axis=1).ravel()
        shift = np.stack(nt, axis=1).reshape(-1, 2)
    return scale, rot, shift


@lru_cache(maxsize=None)
def snowflake_rule(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the composite barycentre rule on the reference snowflake."""
    if not 0 <= level <= 7:
        raise ValueError("level must lie in [0, 7]")
    scale, _, shift = word_charts(snowflake_ifs(), level)
    w = SNOWFLAKE_AREA * scale ** 2
    shift.setflags(write=False)
    w.setflags(write=False)
    return shift, w


@lru_cache(maxsize=None)
def koch_rule(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes ``t_w(g)`` and weights ``4^-level`` on the reference Koch curve."""
    if not 0 <= level <= 10:
        raise ValueError("level must lie in [0, 10]")
    scale, rot, shift = word_charts(koch_ifs(), level)
    from .geometry import _COS, _SIN
    c, s = _COS[rot], _SIN[rot]
    g = KOCH_CENTROID
    nodes = shift + scale[:, None] * np.column_stack([c * g[0] - s * g[1], s * g[0] + c * g[1]])
    w = np.full(len(scale), 0.25 ** level)
    nodes.setflags(write=False)
    w.setflags(write=False)
    return nodes, w


def composite_barycentre_volume(f: Callable, chart: Similarity = IDENTITY, level: int = 4) -> float:
    """Approximate ``int_{chart(snowflake)} f``; ``f`` takes points of shape (n, 2)."""
    nodes, w = snowflake_rule(level)
    return float(chart.scale ** 2 * np.sum(w * f(chart(nodes))))


def composite_barycentre_koch(f: Callable, chart: Similarity = IDENTITY, level: int = 6) -> float:
    """Approximate ``int_{chart(Koch curve)} f dH^d`` with ``H^d(Koch curve) = 1``."""
    nodes, w = koch_rule(level)
    return float(chart.scale ** KOCH_DIM * np.sum(w * f(chart(nodes))))


def moment_csv_rows(table: MomentTable):
    for a, b, v in table.items():
        yield f"{table.label},{a},{b},{v:.17g}"


__all__ = [
    "MomentTable", "snowflake_moments", "koch_moments", "wedge_moments", "triangle_moments",
    "integrate_poly_region", "polygon_moments", "segment_gauss", "composite_barycentre_volume",
    "composite_barycentre_koch", "snowflake_rule", "koch_rule", "word_charts",
    "self_similarity_residual", "region_table",
]
