import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import HEXAGON, L_SHAPE, OCTAGON, TRIANGLE, UNIT_SQUARE, cached_mesh
from stokes_vem.errors import ConfigurationError, GeometryError
from stokes_vem.harness import MANUFACTURED
from stokes_vem.mesh import build_mesh
from stokes_vem.polyquad import derivative_matrix, monomials, n_poly, polygon_rule
from stokes_vem.vemspace import (DofMap, LocalElement, SchemeConfig, build_projectors, dof_count,
                                 interpolate, single_element_mesh, unisolvence_check)

SHAPES = {"square": UNIT_SQUARE, "hexagon": HEXAGON, "lshape": L_SHAPE,
          "octagon": OCTAGON, "triangle": TRIANGLE}
CONFIGS = [SchemeConfig(f, k, enh) for f in ("F1", "F2") for k in (1, 2, 3, 4)
           for enh in (True, False)]


def element(poly, cfg):
    el = LocalElement(cfg, single_element_mesh(poly), 0)
    return el, build_projectors(cfg, el)


def random_poly_field(el, rng):
    """Random ``q in [P_k]^2``: coefficient matrix ``(N_k, 2)`` and its DOFs."""
    b, nk = el.basis, n_poly(el.k)
    coef = rng.standard_normal((nk, 2))

    def field(p):
        return monomials(p, b.center, b.h, el.k) @ coef
    return coef, el.dofs_of(field)


def l2_norm(el, coef):
    """L2 norm on the element of the scaled-monomial expansion ``coef``."""
    n = len(coef)
    return float(np.sqrt(coef @ el.basis.mass[:n, :n] @ coef / el.basis.area))


def test_dof_count_examples():
    assert dof_count(SchemeConfig("F1", 1), 6) == (24, 1)
    assert dof_count(SchemeConfig("F2", 1), 6) == (18, 1)
    assert dof_count(SchemeConfig("F2", 2), 6) == (32, 3)
    # closed forms: 2(n + kn + N_{k-2}) and 2n + kn + (k-1)n + 2 N_{k-2}
    assert dof_count(SchemeConfig("F1", 2), 4) == (26, 3)
    assert dof_count(SchemeConfig("F2", 3), 5) == (10 + 15 + 10 + 6, 6)


def test_scheme_config():
    assert SchemeConfig("f2", 3).formulation == "F2"
    assert SchemeConfig("F1", 3, True).kbar == 3
    assert SchemeConfig("F1", 3, False).kbar == 1
    assert SchemeConfig("F1", 1, False).kbar == 0
    for bad in (dict(formulation="F3"), dict(k=0), dict(k=1.5)):
        with pytest.raises(ConfigurationError):
            SchemeConfig(**bad)


def test_poly_dofs_match_dofs_of():
    el, _ = element(HEXAGON, SchemeConfig("F2", 3))
    coef, dofs = random_poly_field(el, np.random.default_rng(0))
    assert np.allclose(el.poly_dofs @ np.concatenate([coef[:, 0], coef[:, 1]]), dofs, atol=1e-13)


@pytest.mark.parametrize("shape", sorted(SHAPES))
@pytest.mark.parametrize("cfg", CONFIGS, ids=str)
def test_projectors_reproduce_polynomials(shape, cfg):
    el, pr = element(SHAPES[shape], cfg)
    k, h = cfg.k, el.basis.h
    coef, dofs = random_poly_field(el, np.random.default_rng(k))
    n1 = n_poly(k - 1)
    tol = 1e-9 * np.abs(coef).max()
    for c in (0, 1):
        assert np.allclose(pr.pnabla[c] @ dofs, coef[:, c], atol=tol)
        assert np.allclose(pr.p0[c] @ dofs, coef[:, c], atol=tol)
        for d in (0, 1):
            exact = derivative_matrix(k, d, h) @ coef[:, c]
            assert np.allclose(pr.pgrad[c, d] @ dofs, exact[:n1], atol=tol / h)
    div = derivative_matrix(k, 0, h) @ coef[:, 0] + derivative_matrix(k, 1, h) @ coef[:, 1]
    assert np.allclose(pr.pdiv @ dofs, div, atol=tol / h)
    # higher-degree projections of a degree k-1 divergence are the divergence itself
    for deg in (k, k + 1):
        padded = np.zeros(n_poly(deg))
        padded[:n1] = div
        err = l2_norm(el, pr.div_projection(deg) @ dofs - padded)
        assert err <= 1e-9 * max(1.0, l2_norm(el, padded))


def test_p0bar_reproduces_low_degree():
    el, pr = element(OCTAGON, SchemeConfig("F1", 3, enhanced=False))
    coef, dofs = random_poly_field(el, np.random.default_rng(4))
    nb = n_poly(1)
    # oracle: L2 projection onto P_1 by direct quadrature
    pts, wts = polygon_rule(OCTAGON, 8)
    b = el.basis
    m1 = monomials(pts, b.center, b.h, 1)
    vals = monomials(pts, b.center, b.h, 3) @ coef
    mass = m1.T @ (wts[:, None] * m1)
    expect = np.linalg.solve(mass, m1.T @ (wts[:, None] * vals))
    assert pr.p0bar.shape[1] == nb
    for c in (0, 1):
        assert np.allclose(pr.p0bar[c] @ dofs, expect[:, c], atol=1e-10)


def test_pdiv_of_manufactured_velocity_against_quadrature():
    # k=4 interpolation of the smooth velocity on a small element is nearly exact
    cfg = SchemeConfig("F1", 4)
    poly = HEXAGON * 0.05 + 0.5
    el, pr = element(poly, cfg)
    dofs = el.dofs_of(lambda p: MANUFACTURED.u(p))
    pts, wts = polygon_rule(poly, 16)
    b = el.basis
    m = monomials(pts, b.center, b.h, 3)
    g = MANUFACTURED.grad_u(pts)
    div = g[:, 0, 0] + g[:, 1, 1]
    mass = m.T @ (wts[:, None] * m)
    expect = np.linalg.solve(mass, m.T @ (wts * div))
    assert np.max(np.abs(pr.pdiv @ dofs - expect)) < 1e-9


@pytest.mark.parametrize("cfg", CONFIGS, ids=str)
def test_constant_and_rotation(cfg):
    el, pr = element(OCTAGON, cfg)
    ones = el.dofs_of(lambda p: np.tile([2.0, -1.0], (len(p), 1)))
    assert np.allclose(pr.p0[0] @ ones, np.eye(n_poly(cfg.k))[0] * 2.0, atol=1e-10)
    assert np.allclose(pr.pgrad @ ones, 0.0, atol=1e-10)
    rot = el.dofs_of(lambda p: np.column_stack([p[:, 1], -p[:, 0]]))
    assert np.allclose(pr.pdiv @ rot, 0.0, atol=1e-12)


@pytest.mark.parametrize("cfg", CONFIGS, ids=str)
def test_boundary_trace_reproduces_polynomials(cfg):
    el, _ = element(L_SHAPE, cfg)
    coef, dofs = random_poly_field(el, np.random.default_rng(7))
    pts, wts, nrm, tr = el.boundary
    b = el.basis
    exact = monomials(pts, b.center, b.h, cfg.k) @ coef
    assert np.allclose(tr @ dofs, exact, atol=1e-10)
    # closed boundary: the outward normals integrate to zero, the length to the perimeter
    assert np.allclose(wts @ nrm, 0.0, atol=1e-14)
    perim = np.linalg.norm(np.diff(np.vstack([L_SHAPE, L_SHAPE[:1]]), axis=0), axis=1).sum()
    assert wts.sum() == pytest.approx(perim)


def test_f2_trace_splits_into_normal_and_tangential():
    cfg = SchemeConfig("F2", 2)
    el, _ = element(HEXAGON, cfg)
    pts, _, nrm, tr = el.boundary
    rng = np.random.default_rng(1)
    vals = tr @ rng.standard_normal(el.n_vel)
    tang = np.column_stack([nrm[:, 1], -nrm[:, 0]])
    # the tangential trace is one degree lower: on each edge it is P_k in t
    npts = el.n_trace_points
    for i in range(el.n):
        rule, _, _ = el._edge_geometry(i, npts)
        sl = slice(i * npts, (i + 1) * npts)
        vt = np.einsum("pc,pc->p", vals[sl], tang[sl])
        vn = np.einsum("pc,pc->p", vals[sl], nrm[sl])
        fit_t = np.polynomial.polynomial.polyfit(rule.t, vt, cfg.k)
        fit_n = np.polynomial.polynomial.polyfit(rule.t, vn, cfg.k + 1)
        assert np.allclose(np.polynomial.polynomial.polyval(rule.t, fit_t), vt, atol=1e-10)
        assert np.allclose(np.polynomial.polynomial.polyval(rule.t, fit_n), vn, atol=1e-10)


@pytest.mark.parametrize("shape", sorted(SHAPES))
@pytest.mark.parametrize("cfg", CONFIGS[::2], ids=str)
def test_unisolvence(shape, cfg):
    rep = unisolvence_check(cfg, SHAPES[shape])
    assert rep.n_dofs == dof_count(cfg, len(SHAPES[shape]))[0]
    # the edge moments against t**j are intrinsically ill-conditioned for large k
    # (about 3e-5 at k=4 on every shape), so only test for a clear gap from zero
    assert rep.smallest_singular_value > 1e-6
    assert np.isfinite(rep.condition)


def test_unisolvence_scale_invariant():
    cfg = SchemeConfig("F1", 3)
    a = unisolvence_check(cfg, HEXAGON)
    b = unisolvence_check(cfg, HEXAGON * 1e-3 + 5.0)
    assert b.smallest_singular_value == pytest.approx(a.smallest_singular_value, rel=1e-6)


def test_unisolvence_degenerate_polygon():
    with pytest.raises(GeometryError):
        unisolvence_check(SchemeConfig("F1", 1), np.array([[0, 0], [1, 0], [2, 0], [1, 0.0]]))


@pytest.mark.parametrize("form", ["F1", "F2"])
def test_shared_dofs_agree(form):
    cfg = SchemeConfig(form, 3)
    mesh = cached_mesh("M2", 1)
    glob = interpolate(MANUFACTURED.u, cfg, mesh)
    dm = DofMap(cfg, mesh)
    for e in range(mesh.n_elements):
        el = LocalElement(cfg, mesh, e)
        assert np.allclose(el.dofs_of(MANUFACTURED.u), glob[dm.element_dofs(e)], atol=1e-14)


@pytest.mark.parametrize("form", ["F1", "F2"])
def test_dofmap_covers_every_dof(form):
    cfg = SchemeConfig(form, 2)
    mesh = cached_mesh("M3", 1)
    dm = DofMap(cfg, mesh)
    used = np.zeros(dm.n_vel, dtype=int)
    for e in range(mesh.n_elements):
        d = dm.element_dofs(e)
        assert len(d) == len(set(d.tolist())) == dof_count(cfg, len(mesh.elements[e]))[0]
        used[d] += 1
    assert used.min() >= 1
    mask = dm.boundary_mask()
    assert mask.any() and not mask.all()
    assert dm.n_pressure == mesh.n_elements * n_poly(1)


def test_two_element_mesh_shares_edge():
    verts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [2, 1]], dtype=float)
    mesh = build_mesh(verts, [[0, 1, 2, 3], [1, 4, 5, 2]])
    cfg = SchemeConfig("F1", 2)
    dm = DofMap(cfg, mesh)
    shared = set(dm.element_dofs(0).tolist()) & set(dm.element_dofs(1).tolist())
    # two vertices and k edge moments, for each of two components
    assert len(shared) == 2 * (2 + 2)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(sorted(SHAPES)), st.integers(1, 4), st.integers(0, 10 ** 6))
def test_cell_moments_are_low_degree_moments(shape, k, seed):
    cfg = SchemeConfig("F1", k)
    el, pr = element(SHAPES[shape], cfg)
    coef, dofs = random_poly_field(el, np.random.default_rng(seed))
    b = el.basis
    # oracle: moments of q against m_a, |a| <= k, by quadrature
    vals = monomials(b.points, b.center, b.h, k) @ coef
    mono = monomials(b.points, b.center, b.h, k)
    expect = np.einsum("p,pc,pa->ca", b.weights, vals, mono)
    assert np.allclose(pr.moments, pr.moments)
    assert np.allclose(np.einsum("can,n->ca", pr.moments, dofs), expect, atol=1e-9 * b.area)
