import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import cKDTree

from snowdg.geometry import (IDENTITY, KOCH_APEX, SQRT3, Similarity, boundary_distance,
                             boundary_distances, compose, invert, koch_ifs, reference_charts,
                             reference_vertices, sample_boundary, sample_koch, snowflake_ifs)

sims = st.builds(Similarity, st.floats(0.1, 3.0), st.integers(0, 11),
                 st.tuples(st.floats(-2, 2), st.floats(-2, 2)))


def _close(a, b, tol=1e-14):
    return (abs(a.scale - b.scale) < tol and a.rot == b.rot
            and np.allclose(a.offset, b.offset, atol=tol, rtol=0))


def test_compose_examples():
    s = snowflake_ifs()
    assert _close(compose(IDENTITY, s[3]), s[3])
    ss = compose(s[0], s[0])
    assert ss.rot == 2 and abs(ss.scale - 1 / 3) < 1e-15 and np.allclose(ss.offset, 0)
    t = compose(s[1], s[1])
    assert t.rot == 0 and abs(t.scale - 1 / 9) < 1e-15
    assert np.allclose(t.offset, [0.0, 8 / 9], atol=1e-15)


def test_snowflake_maps():
    s = snowflake_ifs()
    assert len(s) == 7
    assert abs(s[0].scale - 1 / SQRT3) < 1e-15 and s[0].rot == 1
    assert np.allclose(s[1].offset, [0.0, 2 / 3], atol=1e-15)


def test_koch_maps():
    t = koch_ifs()
    assert np.allclose(t[0]([1.0, 0.0]), [1 / 3, 0])
    assert np.allclose(t[2].offset, [0.5, 1 / (2 * SQRT3)])
    assert np.allclose(t[3]([1.0, 0.0]), [1, 0])


def test_face_charts():
    ch = reference_charts()
    p = reference_vertices()
    assert np.allclose(ch.face_charts[0](KOCH_APEX), [1 / SQRT3, 0], atol=1e-15)
    assert np.allclose(ch.pair_charts[0](KOCH_APEX), p[1], atol=1e-15)
    for i, g in enumerate(ch.face_charts):
        assert np.allclose(g([0.0, 0.0]), p[i], atol=1e-15)
        assert np.allclose(g([1.0, 0.0]), p[(i + 1) % 6], atol=1e-15)


def test_sample_koch():
    assert np.allclose(sample_koch(0), [[0, 0], [1, 0]])
    d1 = [[0, 0], [1 / 3, 0], [0.5, SQRT3 / 6], [2 / 3, 0], [1, 0]]
    assert np.allclose(sample_koch(1), d1, atol=1e-15)
    assert len(sample_koch(5)) == 4 ** 5 + 1


def test_sample_boundary_closed_polygon_area():
    # shoelace area of the prefractal approaches 6 sqrt3 / 5
    pts = sample_boundary(8)
    x, y = pts[:, 0], pts[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert area > 0
    assert abs(area - 6 * SQRT3 / 5) < 1e-3


def test_distance_examples():
    pts = sample_boundary(4)[::17]
    assert np.all(boundary_distances(pts, tol=1e-10) <= 1e-10)
    # central element of T_2 (word 11): vertices at radius 1/3
    s1 = snowflake_ifs()[0]
    verts = compose(s1, s1)(reference_vertices())
    assert abs(boundary_distances(verts, tol=1e-12).min() - 1 / 3) < 1e-12


def test_distance_against_point_cloud():
    cloud = cKDTree(sample_boundary(8))
    rng = np.random.default_rng(3)
    q = rng.uniform(-1, 1, (40, 2))
    bb = boundary_distances(q, tol=1e-10)
    brute = cloud.query(q)[0]
    # the depth-8 cloud is within ~3^-8 of the curve
    assert np.all(bb <= brute + 1e-10)
    assert np.all(brute - bb <= 3.0 ** -8)
    assert abs(boundary_distance((0.0, 0.0)) - 1 / SQRT3) < 1e-9


@settings(max_examples=60, deadline=None)
@given(sims, sims)
def test_compose_matches_pointwise(a, b):
    x = np.array([[0.3, -0.7], [1.1, 0.2]])
    assert np.allclose(compose(a, b)(x), a(b(x)), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(sims)
def test_invert_roundtrip(s):
    assert _close(compose(s, invert(s)), IDENTITY, tol=1e-12)


def test_nonpositive_scale_rejected():
    with pytest.raises(ValueError):
        Similarity(0.0)
