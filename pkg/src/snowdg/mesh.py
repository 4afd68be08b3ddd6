"""Self-similar meshes of the Koch snowflake.

Elements are words over ``{1..7}``; the element ``s_{w1} o ... o s_{wl}(Omega)``
has chart ``psi_K(x) = 3^(-j/2) R(rot) x + x_K`` where the integer level ``j``
counts a digit 1 once and every other digit twice.  Diameters are compared
through ``j`` only, never through floats.

Faces are found geometrically: an adjacent pair always has levels ``j`` and
``j + 1`` with barycentres exactly ``h_{K+}`` apart.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (SNOWFLAKE_AREA, KOCH_APEX, Similarity, _COS, _SIN, boundary_distances,
                       reference_charts, reference_vertices, rotation_matrix, sample_boundary,
                       snowflake_ifs)

FAMILIES = ("uniform", "quasi_uniform", "boundary_refined", "custom")
INTERIOR, BOUNDARY = 0, 1


class MeshError(RuntimeError):
    """Raised on inconsistent slot accounting or an LQU violation."""


def level_scale(level):
    """Chart scale ``h_K / 2 = 3^(-level/2)``."""
    return 3.0 ** (-0.5 * np.asarray(level, dtype=float))


@dataclass(frozen=True)
class Element:
    index: int
    word: str
    level: int
    rot: int
    center: tuple[float, float]

    @property
    def chart(self) -> Similarity:
        return Similarity(float(level_scale(self.level)), self.rot, self.center)

    @property
    def h(self) -> float:
        return 2.0 * float(level_scale(self.level))

    @property
    def vertices(self) -> np.ndarray:
        return self.chart(reference_vertices())


@dataclass(frozen=True)
class Face:
    index: int
    kind: int           # INTERIOR or BOUNDARY
    minus: int          # larger element (owner for boundary faces)
    plus: int           # smaller element, -1 for boundary faces
    slot_minus: int     # 1..6
    slot_plus: int      # 1..6, first of the two consecutive slots; 0 on the boundary
    level: int          # h_F = 3^(-level/2)

    @property
    def h(self) -> float:
        return float(level_scale(self.level))


@dataclass
class Mesh:
    """Array-backed mesh.  Slots and element indices are stored 1-based / 0-based
    respectively, matching the reference-wedge labels ``W_1..W_6``."""

    family: str
    ell: int
    ellstar: int
    words: list[str]
    level: np.ndarray
    rot: np.ndarray
    center: np.ndarray
    faces: dict = field(default_factory=dict)

    @property
    def n_elements(self) -> int:
        return len(self.words)

    def __len__(self):
        return self.n_elements

    @property
    def scale(self) -> np.ndarray:
        return level_scale(self.level)

    @property
    def h(self) -> np.ndarray:
        return 2.0 * self.scale

    def element(self, k: int) -> Element:
        return Element(k, self.words[k], int(self.level[k]), int(self.rot[k]), tuple(self.center[k]))

    def chart(self, k: int) -> Similarity:
        return Similarity(float(self.scale[k]), int(self.rot[k]), tuple(self.center[k]))

    def area(self) -> float:
        return float(np.sum(SNOWFLAKE_AREA * self.scale ** 2))

    def vertices(self) -> np.ndarray:
        """Element vertices, shape (n, 6, 2)."""
        p = reference_vertices()
        r = rotation_matrix_batch(self.rot)
        return self.center[:, None, :] + self.scale[:, None, None] * np.einsum("kij,vj->kvi", r, p)

    # face arrays -------------------------------------------------------
    def ensure_faces(self) -> "Mesh":
        if not self.faces:
            self.faces = discover_faces(self)
        return self

    @property
    def n_faces(self) -> int:
        return len(self.ensure_faces().faces["kind"])

    def face(self, f: int) -> Face:
        fa = self.ensure_faces().faces
        return Face(int(f), int(fa["kind"][f]), int(fa["minus"][f]), int(fa["plus"][f]),
                    int(fa["slot_minus"][f]), int(fa["slot_plus"][f]), int(fa["level"][f]))

    def interior(self) -> np.ndarray:
        return np.nonzero(self.ensure_faces().faces["kind"] == INTERIOR)[0]

    def boundary(self) -> np.ndarray:
        return np.nonzero(self.ensure_faces().faces["kind"] == BOUNDARY)[0]

    def face_chart(self, f: int) -> Similarity:
        """``xi_F = psi_{K-} o gamma_{slot_minus}``."""
        fc = self.face(f)
        return self.chart(fc.minus) @ reference_charts().face_charts[fc.slot_minus - 1]

    def boundary_faces_per_element(self) -> np.ndarray:
        fa = self.ensure_faces().faces
        counts = np.zeros(self.n_elements, dtype=int)
        np.add.at(counts, fa["minus"][fa["kind"] == BOUNDARY], 1)
        return counts


def rotation_matrix_batch(rot) -> np.ndarray:
    rot = np.asarray(rot) % 12
    c, s = _COS[rot], _SIN[rot]
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


# -- construction -----------------------------------------------------------

_IFS = snowflake_ifs()


def _root(family: str, ell: int, ellstar: int = 0) -> Mesh:
    return Mesh(family, ell, ellstar, [""], np.zeros(1, dtype=int), np.zeros(1, dtype=int),
                np.zeros((1, 2)))


def refine(mesh: Mesh, mask) -> Mesh:
    """Replace every element selected by ``mask`` by its seven children.

    Children take the parent's position, so element order stays word-lexicographic.
    """
    mask = np.asarray(mask, dtype=bool)
    parents = np.nonzero(mask)[0]
    scale = mesh.scale[parents]
    rmat = rotation_matrix_batch(mesh.rot[parents])
    new_level, new_rot, new_center, new_words, order = [], [], [], [], []
    for m, s in enumerate(_IFS, start=1):
        new_level.append(mesh.level[parents] + (1 if m == 1 else 2))
        new_rot.append(mesh.rot[parents] + s.rot)
        new_center.append(mesh.center[parents] + scale[:, None] * np.einsum("kij,j->ki", rmat, s.offset))
        new_words.append([mesh.words[k] + str(m) for k in parents])
        order.append(np.column_stack([parents, np.full(len(parents), m)]))
    keep = np.nonzero(~mask)[0]
    level = np.concatenate([mesh.level[keep]] + new_level)
    rot = np.concatenate([mesh.rot[keep]] + new_rot) % 12
    center = np.concatenate([mesh.center[keep]] + new_center)
    words = [mesh.words[k] for k in keep] + [w for ws in new_words for w in ws]
    key = np.concatenate([np.column_stack([keep, np.zeros(len(keep), dtype=int)])] + order)
    perm = np.lexsort((key[:, 1], key[:, 0]))
    return Mesh(mesh.family, mesh.ell, mesh.ellstar, [words[k] for k in perm],
                level[perm], rot[perm], center[perm])


def build_uniform(ell: int, faces: bool = True) -> Mesh:
    """``T_ell``: every word of length ``ell``."""
    if not 0 <= ell <= 7:
        raise MeshError(f"uniform mesh level {ell} outside [0, 7] (7^ell elements)")
    mesh = _root("uniform", ell)
    for _ in range(ell):
        mesh = refine(mesh, np.ones(mesh.n_elements, dtype=bool))
    mesh.family, mesh.ell = "uniform", ell
    return mesh.ensure_faces() if faces else mesh


def build_quasi_uniform(ell: int, faces: bool = True) -> Mesh:
    """``T'_ell``: ``ell`` times, refine every element of largest diameter."""
    if not 0 <= ell <= 14:
        raise MeshError(f"quasi-uniform mesh level {ell} outside [0, 14]")
    mesh = _root("quasi_uniform", ell)
    for _ in range(ell):
        mesh = refine(mesh, mesh.level == mesh.level.min())
    mesh.family, mesh.ell = "quasi_uniform", ell
    return mesh.ensure_faces() if faces else mesh


def vertex_boundary_distance(mesh: Mesh, rel_tol: float = 1e-9) -> np.ndarray:
    """``min_j dist(v_j^K, boundary)`` for every element, to ``rel_tol * h_K``."""
    verts = mesh.vertices().reshape(-1, 2)
    h = np.repeat(mesh.h, 6)
    # cheap pass first; only near-threshold elements need the tight tolerance
    coarse = boundary_distances(verts, tol=1e-3 * float(h.min())).reshape(-1, 6).min(axis=1)
    delta = coarse.copy()
    near = np.abs(coarse - 0.5 * mesh.h) <= 2e-3 * mesh.h
    if np.any(near):
        idx = np.nonzero(near)[0]
        fine = boundary_distances(mesh.vertices()[idx].reshape(-1, 2),
                                  tol=rel_tol * float(mesh.h[idx].min()))
        delta[idx] = fine.reshape(-1, 6).min(axis=1)
    return delta


def build_boundary_refined(ell: int, ellstar: int, faces: bool = True) -> Mesh:
    """``T'_{ell, ellstar}``: refine ``T'_ell`` near the boundary ``ellstar`` times.

    Each pass refines every element whose vertex distance to the boundary is
    at most ``h_K / 2`` (equality refines).
    """
    if not 0 <= ell <= 14 or not 0 <= ellstar <= 8:
        raise MeshError(f"boundary-refined parameters ({ell}, {ellstar}) out of range")
    mesh = build_quasi_uniform(ell, faces=False)
    for _ in range(ellstar):
        delta = vertex_boundary_distance(mesh)
        mesh = refine(mesh, delta <= 0.5 * mesh.h * (1.0 + 1e-9))
    mesh.family, mesh.ell, mesh.ellstar = "boundary_refined", ell, ellstar
    return mesh.ensure_faces() if faces else mesh


def build(family: str, ell: int, ellstar: int = 0, faces: bool = True) -> Mesh:
    if family in ("uniform",):
        return build_uniform(ell, faces)
    if family in ("quasi", "quasi_uniform"):
        return build_quasi_uniform(ell, faces)
    if family in ("boundary", "boundary_refined"):
        return build_boundary_refined(ell, ellstar, faces)
    raise ValueError(f"unknown mesh family {family!r}")


def from_words(words, family: str = "custom") -> Mesh:
    """Mesh from an explicit list of words (no tiling check)."""
    words = sorted(words)
    maxlen = max(len(w) for w in words)
    mesh = _root(family, maxlen)
    # refine along the word prefixes until every requested word exists
    target = set(words)
    while True:
        mask = np.array([w not in target for w in mesh.words])
        if not mask.any():
            break
        if all(len(w) >= maxlen for w, m in zip(mesh.words, mask) if m):
            raise MeshError("words do not form a tiling of the snowflake")
        mesh = refine(mesh, mask)
    return mesh


# -- faces ------------------------------------------------------------------

def _slot_from_angle(angle: np.ndarray, offset: float, what: str) -> np.ndarray:
    """Nearest integer ``k`` with ``angle = (offset + 2k) pi / 6``, as 1-based slot."""
    units = angle / (np.pi / 6.0)
    k = (units - offset) / 2.0
    kr = np.round(k)
    if np.any(np.abs(k - kr) > 1e-6):
        raise MeshError(f"{what}: neighbour direction is not aligned with a reference slot")
    return (kr.astype(int) % 6) + 1


def discover_faces(mesh: Mesh, rel_tol: float = 1e-10) -> dict:
    """Interior and boundary faces with their slot assignments.

    Interior faces come first (ordered by large element, then small element),
    followed by boundary faces (ordered by element, then slot).
    """
    n = mesh.n_elements
    minus, plus = [], []
    levels = np.unique(mesh.level)
    for j in levels:
        small = np.nonzero(mesh.level == j)[0]
        big = np.nonzero(mesh.level == j - 1)[0]
        if small.size == 0 or big.size == 0:
            continue
        r = 2.0 * float(level_scale(j))
        tree = cKDTree(mesh.center[big])
        hits = tree.query_ball_point(mesh.center[small], r * (1.0 + 1e-6))
        for s, hs in zip(small, hits):
            for b in hs:
                d = np.linalg.norm(mesh.center[big[b]] - mesh.center[s])
                if abs(d - r) <= max(rel_tol, 1e-12) * r * 1e3:
                    minus.append(big[b])
                    plus.append(s)
    minus = np.array(minus, dtype=int)
    plus = np.array(plus, dtype=int)
    order = np.lexsort((plus, minus))
    minus, plus = minus[order], plus[order]

    d = mesh.center[plus] - mesh.center[minus]
    ang = np.arctan2(d[:, 1], d[:, 0])
    # W_i of K- is centred on direction (i-1) pi/3, i.e. 2(i-1) units of pi/6
    slot_minus = _slot_from_angle(ang - mesh.rot[minus] * np.pi / 6, 0.0, "large side")
    # the small side sees K- in the direction of vertex p_{j+1}, angle (2j-1) pi/6
    slot_plus = _slot_from_angle(ang + np.pi - mesh.rot[plus] * np.pi / 6, 1.0, "small side")

    cover = np.zeros((n, 6), dtype=int)
    owner = -np.ones((n, 6), dtype=int)
    nint = len(minus)
    np.add.at(cover, (minus, slot_minus - 1), 1)
    np.add.at(cover, (plus, slot_plus - 1), 1)
    np.add.at(cover, (plus, slot_plus % 6), 1)
    if np.any(cover > 1):
        bad = np.unique(np.nonzero(cover > 1)[0])
        raise MeshError(f"inconsistent slot accounting on elements {bad[:10].tolist()}")
    fidx = np.arange(nint)
    owner[minus, slot_minus - 1] = fidx
    owner[plus, slot_plus - 1] = fidx
    owner[plus, slot_plus % 6] = fidx

    belem, bslot = np.nonzero(cover == 0)
    nb = len(belem)
    owner[belem, bslot] = nint + np.arange(nb)
    return {
        "kind": np.concatenate([np.full(nint, INTERIOR), np.full(nb, BOUNDARY)]),
        "minus": np.concatenate([minus, belem]),
        "plus": np.concatenate([plus, np.full(nb, -1)]),
        "slot_minus": np.concatenate([slot_minus, bslot + 1]),
        "slot_plus": np.concatenate([slot_plus, np.zeros(nb, dtype=int)]),
        "level": np.concatenate([mesh.level[minus], mesh.level[belem]]),
        "slot_faces": owner,
    }


# -- validation -------------------------------------------------------------

@dataclass
class LQUReport:
    ok: bool
    area_error: float
    bad_ratio_pairs: list = field(default_factory=list)
    slot_errors: list = field(default_factory=list)
    off_boundary_faces: list = field(default_factory=list)
    message: str = ""

    def __bool__(self):
        return self.ok


def lqu_check(mesh: Mesh, tol: float = 1e-12) -> LQUReport:
    """Check area partition, slot accounting, and that boundary faces lie on the boundary.

    A neighbour pair violating the sqrt(3) ratio shows up as slots that are not
    covered by any interior face and are not on the domain boundary; such
    slots are reported together with the offending neighbours.
    """
    area_err = abs(mesh.area() - SNOWFLAKE_AREA) / SNOWFLAKE_AREA
    slot_errors, bad_pairs, off = [], [], []
    try:
        fa = discover_faces(mesh)
    except MeshError as exc:
        return LQUReport(False, area_err, slot_errors=[str(exc)], message=str(exc))
    mesh.faces = fa

    gam = reference_charts().face_charts
    bidx = np.nonzero(fa["kind"] == BOUNDARY)[0]
    if bidx.size:
        probes = []
        for f in bidx:
            chart = mesh.chart(fa["minus"][f]) @ gam[fa["slot_minus"][f] - 1]
            probes.append(chart(np.array([[0.0, 0.0], KOCH_APEX, [1.0, 0.0]])))
        probes = np.concatenate(probes)
        hF = np.repeat(level_scale(fa["level"][bidx]), 3)
        dist = boundary_distances(probes, tol=1e-9 * float(hF.min()))
        bad = np.nonzero((dist.reshape(-1, 3) > 1e-7 * hF.reshape(-1, 3)).any(axis=1))[0]
        for b in bad:
            f = bidx[b]
            k, slot = int(fa["minus"][f]), int(fa["slot_minus"][f])
            off.append((k, slot))
        if off:
            tree = cKDTree(mesh.center)
            for k, slot in off:
                r = 1.5 * mesh.h[k] + mesh.h.max()
                for nb in tree.query_ball_point(mesh.center[k], r):
                    if nb == k:
                        continue
                    dl = abs(int(mesh.level[nb]) - int(mesh.level[k]))
                    if dl != 1 and _touching(mesh, k, nb):
                        pair = (min(k, nb), max(k, nb))
                        if pair not in bad_pairs:
                            bad_pairs.append(pair)
    ok = area_err <= tol and not off and not slot_errors
    msg = "ok" if ok else f"{len(off)} slots neither shared nor on the boundary; {len(bad_pairs)} non-LQU pairs"
    return LQUReport(ok, area_err, bad_pairs, slot_errors, off, msg)


def _touching(mesh: Mesh, a: int, b: int, depth: int = 4) -> bool:
    pa = sample_boundary(depth, mesh.chart(a))
    pb = sample_boundary(depth, mesh.chart(b))
    tol = 1e-9 * min(mesh.h[a], mesh.h[b])
    d = cKDTree(pa).query(pb)[0]
    return int(np.sum(d <= tol)) >= 3


# -- I/O --------------------------------------------------------------------

def _fmt(x: float) -> float:
    return float(f"{x:.17g}")


def mesh_to_dict(mesh: Mesh) -> dict:
    fa = mesh.ensure_faces().faces
    return {
        "family": mesh.family,
        "ell": mesh.ell,
        "ellstar": mesh.ellstar,
        "elements": [
            {"word": [int(c) for c in w], "level": int(j), "barycentre": [_fmt(x), _fmt(y)],
             "rot": int(r)}
            for w, j, (x, y), r in zip(mesh.words, mesh.level, mesh.center, mesh.rot)
        ],
        "faces": [
            {"kind": "interior" if k == INTERIOR else "boundary", "minus": int(m),
             "plus": None if p < 0 else int(p), "slot_minus": int(sm),
             "slot_plus": None if k == BOUNDARY else int(sp), "hF_level": int(lv)}
            for k, m, p, sm, sp, lv in zip(fa["kind"], fa["minus"], fa["plus"], fa["slot_minus"],
                                           fa["slot_plus"], fa["level"])
        ],
    }


def export_mesh(mesh: Mesh, path, polygon_depth: int | None = None, polygon_path=None) -> None:
    """Write the mesh as JSON; optionally a per-element prefractal polygon file."""
    with open(path, "w") as fh:
        json.dump(mesh_to_dict(mesh), fh, indent=1)
    if polygon_depth is not None:
        polygon_path = polygon_path or f"{path}.polygons.txt"
        with open(polygon_path, "w") as fh:
            for k in range(mesh.n_elements):
                pts = sample_boundary(polygon_depth, mesh.chart(k))
                coords = " ".join(f"{x:.17g} {y:.17g}" for x, y in pts)
                fh.write(f"{k} {coords}\n")


def import_mesh(path) -> Mesh:
    with open(path) as fh:
        data = json.load(fh)
    els = data["elements"]
    mesh = Mesh(data["family"], data["ell"], data["ellstar"],
                ["".join(str(c) for c in e["word"]) for e in els],
                np.array([e["level"] for e in els], dtype=int),
                np.array([e["rot"] for e in els], dtype=int),
                np.array([e["barycentre"] for e in els], dtype=float).reshape(-1, 2))
    faces = data.get("faces")
    if faces:
        kind = np.array([INTERIOR if f["kind"] == "interior" else BOUNDARY for f in faces])
        n = mesh.n_elements
        fa = {
            "kind": kind,
            "minus": np.array([f["minus"] for f in faces], dtype=int),
            "plus": np.array([-1 if f["plus"] is None else f["plus"] for f in faces], dtype=int),
            "slot_minus": np.array([f["slot_minus"] for f in faces], dtype=int),
            "slot_plus": np.array([0 if f["slot_plus"] is None else f["slot_plus"] for f in faces], dtype=int),
            "level": np.array([f["hF_level"] for f in faces], dtype=int),
        }
        owner = -np.ones((n, 6), dtype=int)
        for i, (k, m, p, sm, sp) in enumerate(zip(fa["kind"], fa["minus"], fa["plus"],
                                                    fa["slot_minus"], fa["slot_plus"])):
            owner[m, sm - 1] = i
            if k == INTERIOR:
                owner[p, sp - 1] = i
                owner[p, sp % 6] = i
        fa["slot_faces"] = owner
        mesh.faces = fa
    return mesh


def cardinality_recurrence(ell: int) -> int:
    """Number of elements of ``T'_ell`` from the per-level count recurrence."""
    counts = {0: 1}
    for _ in range(ell):
        j = min(k for k, v in counts.items() if v)
        n = counts.pop(j)
        counts[j + 1] = counts.get(j + 1, 0) + n
        counts[j + 2] = counts.get(j + 2, 0) + 6 * n
    return sum(counts.values())
