import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import cached_mesh
from stokes_vem.errors import MeshGenerationError
from stokes_vem.harness import (CSV_HEADER, MANUFACTURED, ConvergenceReport, StudyRow,
                                compute_errors, divergence_norms, evaluate_case, ls_slope,
                                observed_rates, polynomial_case, run_study)
from stokes_vem.polyquad import polygon_rule
from stokes_vem.system import DiscreteSolution, assemble
from stokes_vem.vemspace import SchemeConfig, interpolate


def fd_oracle(case, point, h=1e-3):
    """-Lap u + grad p by fourth-order central differences."""
    x = np.asarray(point, dtype=float)
    offs = np.array([-2, -1, 1, 2]) * h
    w1 = np.array([1, -8, 8, -1]) / (12 * h)
    w2 = np.array([-1, 16, 16, -1]) / (12 * h * h)
    lap = -30 / (12 * h * h) * case.u(x[None])[0] * 2
    grad = np.zeros(2)
    for d in (0, 1):
        pts = np.tile(x, (4, 1))
        pts[:, d] += offs
        lap = lap + w2 @ case.u(pts)
        grad[d] = w1 @ case.p(pts)
    return -lap + grad


def test_evaluate_case_examples():
    u, p, f, g = evaluate_case([0.0, 0.0])
    assert np.allclose(u, 0.0)
    assert p == pytest.approx(1 - (math.e - 1) ** 2)
    assert p == pytest.approx(-1.9525, abs=1e-4)
    _, _, f, _ = evaluate_case([0.25, 0.25])
    assert np.allclose(f, fd_oracle(MANUFACTURED, [0.25, 0.25]), atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_forcing_matches_finite_differences(x, y):
    _, _, f, _ = evaluate_case([x, y])
    assert np.allclose(f, fd_oracle(MANUFACTURED, [x, y]), atol=1e-6 * max(1, np.abs(f).max()))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.05, 0.95, (20, 2))
    h = 1e-6
    g = MANUFACTURED.grad_u(pts)
    for d in (0, 1):
        step = np.zeros(2)
        step[d] = h
        fd = (MANUFACTURED.u(pts + step) - MANUFACTURED.u(pts - step)) / (2 * h)
        assert np.allclose(g[:, :, d], fd, atol=1e-7)


def test_velocity_norm_and_divergence():
    pts, wts = polygon_rule(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), 30)
    u = MANUFACTURED.u(pts)
    assert math.sqrt(wts @ (u ** 2).sum(1)) == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    pts = np.random.default_rng(1).uniform(0, 1, (1000, 2))
    g = MANUFACTURED.grad_u(pts)
    assert np.abs(g[:, 0, 0] + g[:, 1, 1]).max() <= 1e-12


@pytest.mark.parametrize("family", ["M1", "M2", "M3"])
def test_pressure_has_zero_mean(family):
    mesh = cached_mesh(family, 2)
    total = sum(w @ MANUFACTURED.p(x)
                for x, w in (polygon_rule(mesh.polygon(e), 12) for e in range(mesh.n_elements)))
    assert abs(total) < 1e-10


@pytest.mark.parametrize("k", [1, 2, 3])
def test_polynomial_case(k):
    case = polynomial_case(k, seed=3)
    pts = np.random.default_rng(k).uniform(0, 1, (50, 2))
    g = case.grad_u(pts)
    assert np.abs(g[:, 0, 0] + g[:, 1, 1]).max() < 1e-12
    sq, sw = polygon_rule(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), 2 * k)
    assert abs(sw @ case.p(sq)) < 1e-13
    for x in pts[:5]:
        assert np.allclose(case.f(x[None])[0], fd_oracle(case, x), atol=1e-5)
    assert polynomial_case(k, seed=3).u(pts) == pytest.approx(case.u(pts))


def _interpolated_solution(mesh, cfg, case):
    s = assemble(mesh, cfg)
    vel = interpolate(case.u, cfg, mesh, s.elements)
    # exact pressure coefficients on each element: L2 projection of p in P_{k-1}
    pre = np.zeros(s.n_pressure)
    for e, el in enumerate(s.elements):
        b = el.basis
        n = len(s.dofmap.pressure_dofs(e))
        m = b.monomials(b.points)[:, :n]
        pre[s.dofmap.pressure_dofs(e)] = np.linalg.solve(b.mass[:n, :n],
                                                         m.T @ (b.weights * case.p(b.points)))
    return DiscreteSolution(system=s, velocity=vel, pressure=pre, multiplier=0.0, residual=0.0)


@pytest.mark.parametrize("cfg", [SchemeConfig("F1", 1), SchemeConfig("F2", 2),
                                 SchemeConfig("F1", 3, False)], ids=str)
def test_errors_of_interpolated_polynomials(cfg):
    case = polynomial_case(cfg.k, seed=0)
    sol = _interpolated_solution(cached_mesh("M2", 1), cfg, case)
    assert max(compute_errors(sol, case)) <= 1e-9
    assert max(divergence_norms(sol)) <= 1e-10


def test_errors_relative_to_exact_norms():
    cfg = SchemeConfig("F1", 2)
    sol = _interpolated_solution(cached_mesh("M1", 1), cfg, MANUFACTURED)
    zero = DiscreteSolution(system=sol.system, velocity=0 * sol.velocity,
                            pressure=0 * sol.pressure, multiplier=0.0, residual=0.0)
    assert compute_errors(zero) == pytest.approx((1.0, 1.0, 1.0), rel=1e-12)
    assert max(compute_errors(sol)) < 0.5


def test_observed_rates_and_slope():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    err = 3.0 * h ** 2
    rates = observed_rates(h, err)
    assert math.isnan(rates[0])
    assert np.allclose(rates[1:], 2.0)
    assert ls_slope(h, err) == pytest.approx(2.0)
    assert ls_slope(h, err * [1, 1, 1, 2], last=4) < 2.0
    assert math.isnan(observed_rates([1, 0.5], [1, 0])[1])


def test_empty_grid_writes_header_only():
    buf = io.StringIO()
    report = run_study([], [1], [1], ["F1"], [True], out=buf)
    assert report.rows == []
    assert buf.getvalue() == ",".join(CSV_HEADER) + "\n"


def test_study_m1_k1_rates():
    report = run_study(["M1"], [1, 2, 3, 4], [1], ["F1"], [True],
                       mesh_cache={(("M1", l, 0)): cached_mesh("M1", l) for l in (1, 2, 3, 4)})
    rows = report.rows
    assert [r.level for r in rows] == [1, 2, 3, 4]
    assert all(r.status == "ok" for r in rows)
    assert all(0.85 <= r.rate_h1 <= 1.3 for r in rows[1:])
    assert all(a.h > b.h for a, b in zip(rows, rows[1:]))
    assert all(r.div_km1 < 1e-10 for r in rows)


def test_study_records_errors_per_row():
    cache = {("M1", 1, 0): cached_mesh("M1", 1),
             ("M1", 2, 0): MeshGenerationError("broken on purpose"),
             ("M1", 3, 0): cached_mesh("M1", 3)}
    buf = io.StringIO()
    report = run_study(["M1"], [1, 2, 3], [1], ["F2"], [False], out=buf, mesh_cache=cache)
    status = [r.status for r in report.rows]
    assert status[0].startswith("ok") and status[2].startswith("ok")
    assert status[1].startswith("error: MeshGenerationError")
    # no rate across the failed level
    assert math.isnan(report.rows[2].rate_h1)
    assert "postprocessed-div" in status[0]
    assert len(buf.getvalue().splitlines()) == 4


def test_csv_formatting():
    rep = ConvergenceReport([StudyRow("M2", 1, 2, "F1", True, h=0.5, status="ok")])
    line = rep.csv_text().splitlines()[1].split(",")
    row = dict(zip(CSV_HEADER, line))
    assert row["enhanced"] == "1"
    assert row["h"] == "5.0000000000e-01"
    assert row["err_h1_u"] == ""
    assert len(line) == len(CSV_HEADER)
