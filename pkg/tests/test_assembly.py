import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import aitken, face_flux, face_flux_matrix, reference_face
from snowdg import assembly as asm
from snowdg.assembly import (DGSpace, assemble_b, assemble_C, assemble_G, assemble_M, assemble_P,
                             assemble_system, compute_I, compute_I_down, compute_I_up,
                             dense_symmetry_error, down_context, interior_face_blocks,
                             interpolate_polynomial, relative_chart, reference_stiffness,
                             up_context, wedge_matrix)
from snowdg.geometry import KOCH_DIM, SNOWFLAKE_AREA, SQRT3, invert
from snowdg.linsolve import check_positive_definite
from snowdg.mesh import build_boundary_refined, build_quasi_uniform, build_uniform
from snowdg.moments import composite_barycentre_koch, composite_barycentre_volume, snowflake_moments
from snowdg.polybasis import Poly2, exponents, monomial_gradients, monomial_values, pullback_matrix
from snowdg.studies import gaussian_problem

EX2 = exponents(2)


def _mono(a, b):
    return lambda x: x[:, 0] ** a * x[:, 1] ** b


def _grad(a, b):
    return lambda x: np.column_stack([a * x[:, 0] ** max(a - 1, 0) * x[:, 1] ** b,
                                      b * x[:, 0] ** a * x[:, 1] ** max(b - 1, 0)])


def _physical(chart, p):
    """Values and physical gradients of the basis mono_i o chart^-1."""
    inv = invert(chart)

    def vals(x):
        return monomial_values(inv(x), p)

    def grads(x):
        return monomial_gradients(inv(x), p) @ inv.matrix
    return vals, grads


# -- G and M -------------------------------------------------------------------

def test_stiffness_examples():
    g1 = reference_stiffness(1)
    assert np.allclose(g1, np.diag([0, 6 * SQRT3 / 5, 6 * SQRT3 / 5]), atol=1e-15)
    g2 = reference_stiffness(2)
    assert abs(g2[3, 3] - 48 * SQRT3 / 55) < 1e-14
    assert g2[1, 2] == 0.0


def test_G_blocks_scale_invariant():
    sp = DGSpace(build_quasi_uniform(3), 2)
    g = assemble_G(sp).toarray()
    ref = reference_stiffness(2)
    for k in (0, 7, sp.mesh.n_elements - 1):
        s = sp.dofs(k)
        assert np.allclose(g[s, s], ref)


def test_mass_examples():
    sp = DGSpace(build_quasi_uniform(2), 2)
    m = assemble_M(sp).toarray()
    for k in range(sp.mesh.n_elements):
        s = sp.dofs(k)
        blk = m[s, s]
        h = sp.mesh.h[k]
        assert abs(blk[0, 0] - (h / 2) ** 2 * SNOWFLAKE_AREA) < 1e-14
        assert abs(blk[1, 2]) < 1e-16
        assert abs(blk[3, 5] - (h / 2) ** 2 * snowflake_moments(4).value(2, 2)) < 1e-15
    # (x^2, y^2) via the barycentre rule at levels 5..7 with extrapolation
    est = aitken(*[composite_barycentre_volume(lambda x: x[:, 0] ** 2 * x[:, 1] ** 2, level=k)
                   for k in (5, 6, 7)])
    assert abs(est - snowflake_moments(4).value(2, 2)) < 1e-8


# -- wedge integrals -------------------------------------------------------------

def test_I_constant_w_vanishes():
    rng = np.random.default_rng(0)
    v = Poly2(rng.normal(size=6))
    for s in range(1, 7):
        assert compute_I_down(Poly2.constant(3.0, 2), v, down_context(s)) == 0.0
        assert compute_I_up(Poly2.constant(-1.0, 2), v, up_context(s)) == 0.0


def test_context_kind_checked():
    with pytest.raises(ValueError):
        compute_I_down(Poly2.monomial(1, 0), Poly2.constant(), up_context(1))
    with pytest.raises(ValueError):
        compute_I(Poly2.monomial(3, 0), Poly2.constant(), down_context(1))


def test_I_down_x_1_against_polygon_oracle():
    val = compute_I_down(Poly2.monomial(1, 0), Poly2.constant(), down_context(1))
    ref = face_flux(_grad(1, 0), _mono(0, 0), reference_face(1))
    assert abs(val - ref) < 1e-6
    assert abs(val) > 0.1


@pytest.mark.parametrize("slot", [2, 5])
def test_wedge_matrices_against_polygon_oracle(slot):
    grads = lambda x: monomial_gradients(x, 2)
    vals = lambda x: monomial_values(x, 2)
    d = face_flux_matrix(grads, vals, reference_face(slot))
    u = d + face_flux_matrix(grads, vals, reference_face(slot % 6 + 1))
    assert np.abs(wedge_matrix("down", slot, 2) - d).max() < 1e-6
    assert np.abs(wedge_matrix("up", slot, 2) - u).max() < 1e-6


def test_divergence_identity_some_faces():
    mesh = build_quasi_uniform(3)
    rng = np.random.default_rng(11)
    for f in mesh.interior()[::9]:
        fc = mesh.face(f)
        drot = (mesh.rot[fc.minus] - mesh.rot[fc.plus]) % 12
        back = pullback_matrix(invert(relative_chart(fc.slot_plus, drot)), 2)
        for _ in range(5):
            w, v = Poly2(rng.normal(size=6)), Poly2(rng.normal(size=6))
            dn = compute_I_down(w, v, down_context(fc.slot_minus))
            up = compute_I_up(Poly2(back @ w.coeffs), Poly2(back @ v.coeffs), up_context(fc.slot_plus))
            assert abs(dn + up) <= 1e-12 * max(1.0, abs(dn))


def test_relative_chart_matches_geometry():
    mesh = build_quasi_uniform(3)
    for f in mesh.interior()[::5]:
        fc = mesh.face(f)
        drot = (mesh.rot[fc.minus] - mesh.rot[fc.plus]) % 12
        direct = invert(mesh.chart(fc.plus)) @ mesh.chart(fc.minus)
        rho = relative_chart(fc.slot_plus, drot)
        assert rho.rot == direct.rot and abs(rho.scale - direct.scale) < 1e-12
        assert np.allclose(rho.offset, direct.offset, atol=1e-12)


# -- face blocks against physical oracles ---------------------------------------

def _canonical_face():
    mesh = build_quasi_uniform(1)
    k1, k2 = mesh.words.index("1"), mesh.words.index("2")
    fa = mesh.faces
    f = [i for i in mesh.interior() if (fa["minus"][i], fa["plus"][i]) == (k1, k2)][0]
    return mesh, f


def test_C_blocks_canonical_pair():
    mesh, f = _canonical_face()
    fc = mesh.face(f)
    xi = mesh.face_chart(f)
    # the right-hand normal of xi_F points out of K-
    apex = xi(np.array([[0.5, SQRT3 / 6]]))[0]
    tang = xi(np.array([[0.51, SQRT3 / 6]]))[0] - apex
    assert np.dot([tang[1], -tang[0]], apex - mesh.center[fc.minus]) > 0
    vm, gm = _physical(mesh.chart(fc.minus), 2)
    vn, gn = _physical(mesh.chart(fc.plus), 2)
    blocks = interior_face_blocks(fc.slot_minus, fc.slot_plus,
                                  int((mesh.rot[fc.minus] - mesh.rot[fc.plus]) % 12), 2)
    # flux matrices F[j, i] = int d_n(phi_j) phi_i with n out of K-
    assert np.abs(blocks.c_mm + 0.5 * face_flux_matrix(gm, vm, xi).T).max() < 1e-6
    assert np.abs(blocks.c_nm - 0.5 * face_flux_matrix(gm, vn, xi).T).max() < 1e-6
    assert np.abs(blocks.c_mn + 0.5 * face_flux_matrix(gn, vm, xi).T).max() < 1e-6
    assert np.abs(blocks.c_nn - 0.5 * face_flux_matrix(gn, vn, xi).T).max() < 1e-6


def test_P_blocks_against_koch_rule():
    mesh, f = _canonical_face()
    fc = mesh.face(f)
    xi = mesh.face_chart(f)
    hd = xi.scale ** KOCH_DIM
    vm, _ = _physical(mesh.chart(fc.minus), 1)
    vn, _ = _physical(mesh.chart(fc.plus), 1)
    blocks = interior_face_blocks(fc.slot_minus, fc.slot_plus,
                                  int((mesh.rot[fc.minus] - mesh.rot[fc.plus]) % 12), 1)
    q = lambda a, b: np.array([[composite_barycentre_koch(lambda x: a(x)[:, i] * b(x)[:, j], xi, level=8)
                                for j in range(3)] for i in range(3)]) / hd
    assert np.abs(blocks.p_mm - q(vm, vm)).max() < 1e-6
    assert np.abs(blocks.p_mn + q(vm, vn)).max() < 1e-6
    assert np.abs(blocks.p_nn - q(vn, vn)).max() < 1e-6


def test_P_constants():
    sp = DGSpace(build_quasi_uniform(2), 1)
    p = assemble_P(sp, eta=10.0, boundary=False)
    fa = sp.mesh.faces
    f = sp.mesh.interior()[0]
    m, n = fa["minus"][f], fa["plus"][f]
    single = interior_face_blocks(fa["slot_minus"][f], fa["slot_plus"][f],
                                  int((sp.mesh.rot[m] - sp.mesh.rot[n]) % 12), 1)
    assert abs(10 * single.p_mm[0, 0] - 10.0) < 1e-14
    assert abs(10 * single.p_mn[0, 0] + 10.0) < 1e-14
    assert abs(p[sp.n_local * m, sp.n_local * n] + 10.0) < 1e-14


# -- global matrices -----------------------------------------------------------------

def test_C_kills_constant_trial_functions():
    sp = DGSpace(build_quasi_uniform(3), 2)
    x = np.zeros(sp.n_dofs)
    x[::sp.n_local] = np.random.default_rng(1).normal(size=sp.mesh.n_elements)
    assert np.abs(assemble_C(sp) @ x).max() < 1e-13


@pytest.mark.parametrize("p", [1, 2])
def test_P_vanishes_on_global_polynomials(p):
    sp = DGSpace(build_quasi_uniform(3), p)
    pint = assemble_P(sp, 1.0, boundary=False)
    rng = np.random.default_rng(p)
    q = Poly2(rng.normal(size=len(exponents(p))))
    x = interpolate_polynomial(sp, q)
    assert abs(x @ (pint @ x)) <= 1e-12 * max(1.0, x @ x)
    assert np.abs(pint @ x).max() < 1e-12 * max(1.0, np.abs(x).max())


def test_P_positive_semidefinite():
    sp = DGSpace(build_quasi_uniform(2), 2)
    lam = np.linalg.eigvalsh(assemble_P(sp, 1.0).toarray())
    assert lam.min() > -1e-12 * lam.max()


def test_penalty_linearity():
    sp = DGSpace(build_quasi_uniform(2), 1)
    a10, _ = assemble_system(sp, 10.0)
    a20, _ = assemble_system(sp, 20.0)
    assert abs(a20 - a10 - assemble_P(sp, 10.0)).max() < 1e-12


@pytest.mark.parametrize("p", [1, 2])
def test_spd_at_default_penalty(p):
    for ell in range(4):
        sp = DGSpace(build_quasi_uniform(ell), p)
        a, _ = assemble_system(sp)
        assert dense_symmetry_error(a) <= 1e-12
        assert check_positive_definite(a) > 0


def test_small_penalty_is_indefinite():
    sp = DGSpace(build_quasi_uniform(2), 1)
    a, _ = assemble_system(sp, 0.01)
    assert np.linalg.eigvalsh(a.toarray()).min() < 0


def test_single_element_system():
    sp = DGSpace(build_uniform(0), 1)
    a, b = assemble_system(sp, f=lambda x: np.ones(x.shape[:-1]))
    assert a.shape == (3, 3)
    x = np.linalg.solve(a.toarray(), b)
    assert np.all(np.isfinite(x)) and x[0] > 0


def test_load_vector_constant():
    sp = DGSpace(build_quasi_uniform(3), 2)
    for level in (0, 2, 4):
        b = sp.local(assemble_b(sp, lambda x: np.ones(x.shape[:-1]), level))
        assert np.allclose(b[:, 0], SNOWFLAKE_AREA * sp.mesh.scale ** 2, rtol=1e-14)
        assert np.abs(b[:, 1]).max() < 1e-14


def test_load_vector_gaussian_quadrature_converges():
    prob = gaussian_problem(0.1)
    sp = DGSpace(build_quasi_uniform(2), 2)
    ref = assemble_b(sp, prob.f, 7)
    errs = [np.linalg.norm(assemble_b(sp, prob.f, k) - ref) / np.linalg.norm(ref) for k in (3, 4, 5, 6)]
    assert all(b < a / 4 for a, b in zip(errs, errs[1:]))
    fine = DGSpace(build_quasi_uniform(6), 2)
    b4, b5 = assemble_b(fine, prob.f, 4), assemble_b(fine, prob.f, 5)
    assert np.linalg.norm(b4 - b5) <= 1e-3 * np.linalg.norm(b5)


def test_bad_degree():
    with pytest.raises(ValueError):
        DGSpace(build_uniform(0), 3)
    with pytest.raises(ValueError):
        assemble_P(DGSpace(build_uniform(0), 1), eta=0.0)


def _face_patterns():
    keys = set()
    for mesh in (build_quasi_uniform(4), build_boundary_refined(2, 2)):
        fa = mesh.faces
        for f in mesh.interior():
            m, n = fa["minus"][f], fa["plus"][f]
            keys.add((int(fa["slot_minus"][f]), int(fa["slot_plus"][f]), int((mesh.rot[m] - mesh.rot[n]) % 12)))
    return sorted(keys)


PATTERNS = _face_patterns()


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(PATTERNS), st.lists(st.floats(-3, 3), min_size=12, max_size=12))
def test_divergence_identity_property(pattern, c):
    # the two sides of a face see opposite normal derivatives
    sm, sp_, drot = pattern
    w, v = Poly2(c[:6]), Poly2(c[6:])
    back = pullback_matrix(invert(relative_chart(sp_, drot)), 2)
    dn = w.coeffs @ wedge_matrix("down", sm, 2) @ v.coeffs
    up = (back @ w.coeffs) @ wedge_matrix("up", sp_, 2) @ (back @ v.coeffs)
    assert abs(dn + up) <= 1e-12 * max(1.0, abs(dn)) * (1 + np.abs(c).max() ** 2)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_bilinear_matrix_matches_compute_I(c):
    w = Poly2(c)
    v = Poly2(c[::-1])
    for s in (1, 4):
        assert abs(w.coeffs @ wedge_matrix("down", s, 2) @ v.coeffs
                   - compute_I(w, v, down_context(s))) < 1e-11 * (1 + np.abs(c).max() ** 2)
