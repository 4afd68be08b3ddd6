"""Plane similarities, the snowflake and Koch-curve IFSs, and reference charts.

Rotations are kept as integers modulo 12 (units of pi/6) so that chart
compositions stay exact; only the scale and the translation are floats.

The reference snowflake has diameter 2 and is centred at the origin.  Its six
outer tips ``p_i`` sit at angles ``(2i - 3) pi / 6`` on the unit circle, so the
reference wedge ``W_1`` (between ``[0, p_1]`` and ``[0, p_2]``) is symmetric
about the positive x-axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

SQRT3 = np.sqrt(3.0)
#: Hausdorff dimension of the Koch curve.
KOCH_DIM = np.log(4.0) / np.log(3.0)
#: Area of the reference snowflake.
SNOWFLAKE_AREA = 6.0 * SQRT3 / 5.0

# cos/sin of k*pi/6, tabulated so quarter turns etc. are exact.
_COS = np.array([1.0, SQRT3 / 2, 0.5, 0.0, -0.5, -SQRT3 / 2,
                 -1.0, -SQRT3 / 2, -0.5, 0.0, 0.5, SQRT3 / 2])
_SIN = np.roll(_COS, 3)


def rotation_matrix(rot: int) -> np.ndarray:
    """Rotation by ``rot * pi / 6``."""
    k = rot % 12
    c, s = _COS[k], _SIN[k]
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Similarity:
    """``x -> scale * R(rot * pi/6) @ x + shift``."""

    scale: float
    rot: int = 0
    shift: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"similarity scale must be positive, got {self.scale}")
        object.__setattr__(self, "rot", int(self.rot) % 12)
        object.__setattr__(self, "shift", (float(self.shift[0]), float(self.shift[1])))

    @property
    def matrix(self) -> np.ndarray:
        """Linear part ``scale * R``."""
        return self.scale * rotation_matrix(self.rot)

    @property
    def offset(self) -> np.ndarray:
        return np.array(self.shift)

    def __call__(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.matrix.T + self.offset

    def __matmul__(self, other: "Similarity") -> "Similarity":
        return compose(self, other)


IDENTITY = Similarity(1.0, 0, (0.0, 0.0))


def compose(a: Similarity, b: Similarity) -> Similarity:
    """The map ``x -> a(b(x))``."""
    shift = a.matrix @ b.offset + a.offset
    return Similarity(a.scale * b.scale, a.rot + b.rot, tuple(shift))


def invert(s: Similarity) -> Similarity:
    rinv = rotation_matrix(-s.rot)
    shift = -(rinv @ s.offset) / s.scale
    return Similarity(1.0 / s.scale, -s.rot, tuple(shift))


def snowflake_ifs() -> list[Similarity]:
    """The seven maps ``s_1..s_7`` tiling the snowflake by copies of itself."""
    maps = [Similarity(1.0 / SQRT3, 1, (0.0, 0.0))]
    for m in range(2, 8):
        # alpha_m = (2m - 1) pi / 6, i.e. rotation index 2m - 1
        k = (2 * m - 1) % 12
        maps.append(Similarity(1.0 / 3.0, 0, (2.0 / 3.0 * _COS[k], 2.0 / 3.0 * _SIN[k])))
    return maps


def koch_ifs() -> list[Similarity]:
    """The four maps ``t_1..t_4`` of the Koch curve from (0,0) to (1,0)."""
    return [
        Similarity(1.0 / 3.0, 0, (0.0, 0.0)),
        Similarity(1.0 / 3.0, 2, (1.0 / 3.0, 0.0)),
        Similarity(1.0 / 3.0, -2, (0.5, 1.0 / (2.0 * SQRT3))),
        Similarity(1.0 / 3.0, 0, (2.0 / 3.0, 0.0)),
    ]


class ReferenceCharts(NamedTuple):
    vertices: np.ndarray          # (6, 2), p_1..p_6
    segment_dirs: np.ndarray      # (6, 2), unit vectors of S_1..S_6
    face_charts: list[Similarity]  # gamma_i : Gamma -> F_i
    pair_charts: list[Similarity]  # beta_j : Gamma -> F_j u F_{j+1}


def vertex_angle_index(i: int) -> int:
    """Rotation index (units of pi/6) of reference vertex ``p_i``, 1-based."""
    return (2 * i - 3) % 12


def reference_vertices() -> np.ndarray:
    idx = [vertex_angle_index(i) for i in range(1, 7)]
    return np.column_stack([_COS[idx], _SIN[idx]])


def reference_charts() -> ReferenceCharts:
    p = reference_vertices()
    gammas = [Similarity(1.0, 2 * i + 1, tuple(p[i - 1])) for i in range(1, 7)]
    # The sqrt(3)-copies bump outward, so they run backwards from p_{j+2}.
    betas = [Similarity(SQRT3, 2 * (j - 1) - 2, tuple(p[(j + 1) % 6])) for j in range(1, 7)]
    return ReferenceCharts(p, p.copy(), gammas, betas)


KOCH_APEX = np.array([0.5, SQRT3 / 6.0])
#: H^d-barycentre of the Koch curve, (J[x], J[y]).
KOCH_CENTROID = np.array([0.5, 1.0 / (6.0 * SQRT3)])


def sample_koch(depth: int) -> np.ndarray:
    """Vertices of the level-``depth`` prefractal of the Koch curve, in order."""
    if depth < 0 or depth > 12:
        raise ValueError(f"depth must lie in [0, 12], got {depth}")
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    maps = koch_ifs()
    for _ in range(depth):
        parts = [maps[0](pts)] + [t(pts)[1:] for t in maps[1:]]
        pts = np.concatenate(parts)
    return pts


def sample_boundary(depth: int, chart: Similarity = IDENTITY) -> np.ndarray:
    """Closed prefractal polygon of ``chart(boundary of the snowflake)``.

    Vertices run anticlockwise from ``chart(p_1)``; the closing vertex is not
    repeated.
    """
    curve = sample_koch(depth)
    faces = reference_charts().face_charts
    pts = np.concatenate([g(curve)[:-1] for g in faces])
    return chart(pts)


# -- distance to the snowflake boundary ------------------------------------

_APEX_C = complex(0.5, SQRT3 / 6.0)


def boundary_distances(points, tol: float | None = None, chart: Similarity = IDENTITY,
                       max_levels: int = 60) -> np.ndarray:
    """Distance from each point to ``chart(boundary)``, to absolute error ``tol``.

    Branch and bound over the Koch cells of the boundary.  Each cell is a copy
    of the Koch curve between its endpoints ``a`` and ``b``; it lies inside the
    disc of radius ``|b - a| / 2`` about the chord midpoint, which gives the
    lower bound, and its endpoints give the upper bound.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    q = pts[:, 0] + 1j * pts[:, 1]
    n = len(q)
    if tol is None:
        tol = 1e-9 * chart.scale
    if tol <= 0:
        raise ValueError("tol must be positive")

    ends = np.array([complex(*e) for e in chart(reference_vertices())])
    owner = np.repeat(np.arange(n), 6)
    za = np.tile(ends, n)
    zb = np.tile(np.roll(ends, -1), n)
    best = np.full(n, np.inf)
    result = np.full(n, np.nan)

    for _ in range(max_levels):
        ub = np.minimum(np.abs(q[owner] - za), np.abs(q[owner] - zb))
        np.minimum.at(best, owner, ub)
        r = 0.5 * np.abs(zb - za)
        lb = np.maximum(np.abs(q[owner] - 0.5 * (za + zb)) - r, 0.0)
        keep = lb <= best[owner]
        owner, za, zb, lb = owner[keep], za[keep], zb[keep], lb[keep]

        low = np.full(n, np.inf)
        np.minimum.at(low, owner, lb)
        done = (best - low <= tol) & np.isnan(result)
        result[done] = best[done]
        active = ~done[owner] & np.isnan(result[owner])
        owner, za, zb = owner[active], za[active], zb[active]
        if owner.size == 0:
            break

        d = zb - za
        p1 = za + d / 3.0
        apex = za + d * _APEX_C
        p2 = za + 2.0 * d / 3.0
        owner = np.repeat(owner, 4)
        za = np.column_stack([za, p1, apex, p2]).ravel()
        zb = np.column_stack([p1, apex, p2, zb]).ravel()
    else:
        pending = np.isnan(result)
        result[pending] = best[pending]
    return result


def boundary_distance(point, tol: float | None = None) -> float:
    """Distance from one point to the boundary of the reference snowflake."""
    return float(boundary_distances([point], tol)[0])

