import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from snowdg.geometry import SNOWFLAKE_AREA, SQRT3
from snowdg.mesh import (BOUNDARY, INTERIOR, MeshError, build, build_boundary_refined,
                         build_quasi_uniform, build_uniform, cardinality_recurrence, export_mesh,
                         from_words, import_mesh, lqu_check)


def test_uniform_counts_and_faces():
    m0 = build_uniform(0)
    assert m0.n_elements == 1
    assert len(m0.interior()) == 0 and len(m0.boundary()) == 6
    assert build_uniform(2).n_elements == 49


def test_uniform_boundary_adjacent_elements():
    counts = build_uniform(2).boundary_faces_per_element()
    adj = counts[counts > 0]
    assert adj.size == 30
    assert np.sum(adj == 2) == 12 and np.sum(adj == 4) == 18


def test_quasi_uniform_counts():
    assert [build_quasi_uniform(k).n_elements for k in range(5)] == [1, 7, 13, 55, 133]
    assert cardinality_recurrence(7) == 4039
    assert cardinality_recurrence(9) == 35839


def test_boundary_refined_base_is_quasi_uniform():
    assert build_boundary_refined(3, 0).n_elements == build_quasi_uniform(3).n_elements
    assert build_boundary_refined(3, 1).n_elements > build_quasi_uniform(3).n_elements


def test_canonical_pair_adjacent():
    m = build_quasi_uniform(1)
    k1, k2 = m.words.index("1"), m.words.index("2")
    assert abs(np.linalg.norm(m.center[k1] - m.center[k2]) - 2 / 3) < 1e-15
    assert abs(m.h[k2] - 2 / 3) < 1e-15
    fa = m.faces
    f = [i for i in m.interior() if {fa["minus"][i], fa["plus"][i]} == {k1, k2}]
    assert len(f) == 1
    face = m.face(f[0])
    assert face.minus == k1 and (face.slot_minus, face.slot_plus) == (2, 5)
    assert abs(face.h - m.h[k1] / 2) < 1e-15
    assert abs(face.h - SQRT3 / 2 * m.h[k2]) < 1e-15


def test_face_levels_and_ratio():
    m = build_quasi_uniform(4)
    fa = m.faces
    i = m.interior()
    assert np.all(m.level[fa["plus"][i]] == m.level[fa["minus"][i]] + 1)
    assert np.allclose(m.h[fa["minus"][i]] / m.h[fa["plus"][i]], SQRT3)


def test_every_slot_covered_once():
    m = build_boundary_refined(2, 2)
    owner = m.faces["slot_faces"]
    assert np.all(owner >= 0)
    # interior faces cover one slot on the large side and two on the small side
    per_face = np.bincount(owner.ravel(), minlength=m.n_faces)
    kinds = m.faces["kind"]
    assert np.all(per_face[kinds == INTERIOR] == 3)
    assert np.all(per_face[kinds == BOUNDARY] == 1)


def test_lqu_examples():
    assert lqu_check(build_uniform(2)).ok
    assert lqu_check(build_boundary_refined(3, 3)).ok
    outer = ["1"] + [f"{a}{b}" for a in "234567" for b in "1234567"]
    rep = lqu_check(from_words(outer))
    assert not rep.ok
    assert rep.bad_ratio_pairs
    m = from_words(outer)
    for a, b in rep.bad_ratio_pairs:
        assert abs(int(m.level[a]) - int(m.level[b])) >= 2


def test_area_partition():
    for m in (build_uniform(3), build_quasi_uniform(5), build_boundary_refined(2, 3)):
        assert abs(m.area() - SNOWFLAKE_AREA) <= 1e-12 * SNOWFLAKE_AREA


def test_export_import_roundtrip(tmp_path):
    m = build_quasi_uniform(1)
    path = tmp_path / "m.json"
    export_mesh(m, path, polygon_depth=2)
    data = json.loads(path.read_text())
    assert len(data["elements"]) == 7
    assert sum(f["kind"] == "interior" for f in data["faces"]) == 6
    lines = (tmp_path / "m.json.polygons.txt").read_text().splitlines()
    assert len(lines) == 7
    assert all(len(l.split()) == 1 + 2 * 6 * 4 ** 2 for l in lines)
    back = import_mesh(path)
    assert back.words == m.words
    assert np.array_equal(back.level, m.level) and np.array_equal(back.rot, m.rot)
    assert np.allclose(back.center, m.center, rtol=0, atol=0)
    for key in ("kind", "minus", "plus", "slot_minus", "slot_plus", "level", "slot_faces"):
        assert np.array_equal(back.faces[key], m.faces[key]), key


def test_bad_arguments():
    with pytest.raises(ValueError):
        build("nonsense", 2)
    with pytest.raises(MeshError):
        from_words(["1", "2"])


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 6))
def test_quasi_uniform_matches_recurrence(ell):
    m = build_quasi_uniform(ell, faces=False)
    assert m.n_elements == cardinality_recurrence(ell)
    assert m.level.max() - m.level.min() <= 1


@settings(max_examples=6, deadline=None)
@given(st.integers(0, 3), st.integers(0, 2))
def test_boundary_refined_is_lqu(ell, ellstar):
    m = build_boundary_refined(ell, ellstar)
    rep = lqu_check(m)
    assert rep.ok, rep.message
    # h_F over interior faces takes the sqrt3-ratio values only
    fa = m.faces
    i = m.interior()
    assert np.allclose(m.h[fa["minus"][i]] / 2, 3.0 ** (-fa["level"][i] / 2))
