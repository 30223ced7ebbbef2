"""Manufactured-solution benchmark, error norms and convergence studies."""
from dataclasses import dataclass, field
import csv
import io
import logging
import math

import numpy as np

from .mesh import generate, mesh_diameter
from .polyquad import monomial_gradients, monomials, n_poly, polygon_rule
from .system import apply_dirichlet, assemble, build_elements, solve
from .vemspace import SchemeConfig

log = logging.getLogger(__name__)

CSV_HEADER = ["family", "level", "h", "k", "formulation", "enhanced", "n_dof_vel",
              "n_dof_p", "err_h1_u", "err_l2_u", "err_l2_p", "div_km1", "div_k",
              "div_kp1", "rate_h1", "rate_l2_u", "rate_l2_p", "status"]

TWO_PI = 2.0 * math.pi
E_MEAN = (math.e - 1.0) ** 2


@dataclass(frozen=True)
class ManufacturedCase:
    """Closed-form Stokes solution: callables of an ``(npts, 2)`` point array.

    ``grad_u`` returns ``(npts, 2, 2)`` with ``[:, c, d] = d u_c / d x_d``.
    """

    u: object
    p: object
    f: object
    grad_u: object
    name: str = "custom"

    def evaluate(self, points):
        pts = np.atleast_2d(points)
        return self.u(pts), self.p(pts), self.f(pts), self.grad_u(pts)


def _u(p):
    x, y = p[:, 0], p[:, 1]
    return np.column_stack([np.cos(TWO_PI * x) * np.sin(TWO_PI * y),
                            -np.sin(TWO_PI * x) * np.cos(TWO_PI * y)])


def _p(p):
    return np.exp(p[:, 0] + p[:, 1]) - E_MEAN


def _f(p):
    x, y = p[:, 0], p[:, 1]
    ex = np.exp(x + y)
    c = 2.0 * TWO_PI ** 2
    return np.column_stack([c * np.cos(TWO_PI * x) * np.sin(TWO_PI * y) + ex,
                            -c * np.sin(TWO_PI * x) * np.cos(TWO_PI * y) + ex])


def _grad_u(p):
    x, y = p[:, 0], p[:, 1]
    cx, sx = np.cos(TWO_PI * x), np.sin(TWO_PI * x)
    cy, sy = np.cos(TWO_PI * y), np.sin(TWO_PI * y)
    g = np.empty((len(p), 2, 2))
    g[:, 0, 0] = -TWO_PI * sx * sy
    g[:, 0, 1] = TWO_PI * cx * cy
    g[:, 1, 0] = -TWO_PI * cx * cy
    g[:, 1, 1] = TWO_PI * sx * sy
    return g


MANUFACTURED = ManufacturedCase(u=_u, p=_p, f=_f, grad_u=_grad_u, name="manufactured")


def evaluate_case(point, case=MANUFACTURED):
    """``(u, p, f, grad u)`` at a single point."""
    u, p, f, g = case.evaluate(np.asarray(point, dtype=float)[None, :])
    return u[0], p[0], f[0], g[0]


def polynomial_case(k, seed=0):
    """A random solenoidal ``u in [P_k]^2`` with ``p in P_{k-1}`` of zero mean on [0,1]^2.

    ``u = curl(psi)`` for a random ``psi in P_{k+1}``; ``f = -lap u + grad p``.
    """
    rng = np.random.default_rng(seed)
    # psi = sum c_ab x^a y^b with a+b <= k+1
    terms = [(a, d - a) for d in range(k + 2) for a in range(d + 1)]
    cpsi = rng.standard_normal(len(terms))
    pterms = [(a, d - a) for d in range(k) for a in range(d + 1)]
    cp = rng.standard_normal(len(pterms))
    # subtract the mean of p over the unit square: int x^a y^b = 1/((a+1)(b+1))
    mean = sum(c / ((a + 1) * (b + 1)) for c, (a, b) in zip(cp, pterms))

    def mono(x, y, a, b):
        if a < 0 or b < 0:
            return np.zeros_like(x)
        return x ** a * y ** b

    def dpsi(x, y, i, j):
        """d^{i+j} psi / dx^i dy^j."""
        out = np.zeros_like(x)
        for c, (a, b) in zip(cpsi, terms):
            if a < i or b < j:
                continue
            fa = math.perm(a, i)
            fb = math.perm(b, j)
            out = out + c * fa * fb * mono(x, y, a - i, b - j)
        return out

    def u(p):
        x, y = p[:, 0], p[:, 1]
        return np.column_stack([dpsi(x, y, 0, 1), -dpsi(x, y, 1, 0)])

    def grad_u(p):
        x, y = p[:, 0], p[:, 1]
        g = np.empty((len(p), 2, 2))
        g[:, 0, 0] = dpsi(x, y, 1, 1)
        g[:, 0, 1] = dpsi(x, y, 0, 2)
        g[:, 1, 0] = -dpsi(x, y, 2, 0)
        g[:, 1, 1] = -dpsi(x, y, 1, 1)
        return g

    def pres(p):
        x, y = p[:, 0], p[:, 1]
        out = np.full_like(x, -mean)
        for c, (a, b) in zip(cp, pterms):
            out = out + c * mono(x, y, a, b)
        return out

    def grad_p(x, y):
        gx = np.zeros_like(x)
        gy = np.zeros_like(x)
        for c, (a, b) in zip(cp, pterms):
            gx = gx + c * a * mono(x, y, a - 1, b)
            gy = gy + c * b * mono(x, y, a, b - 1)
        return gx, gy

    def f(p):
        x, y = p[:, 0], p[:, 1]
        lap_ux = dpsi(x, y, 2, 1) + dpsi(x, y, 0, 3)
        lap_uy = -(dpsi(x, y, 3, 0) + dpsi(x, y, 1, 2))
        gx, gy = grad_p(x, y)
        return np.column_stack([-lap_ux + gx, -lap_uy + gy])

    return ManufacturedCase(u=u, p=pres, f=f, grad_u=grad_u, name=f"poly{k}")


# ---------------------------------------------------------------- solve + errors

def solve_case(mesh, config, case=MANUFACTURED):
    elements, projectors = build_elements(mesh, config)
    system = assemble(mesh, config, case.f, elements, projectors)
    return solve(apply_dirichlet(system, case.u))


def _error_rules(system, degree):
    for el in system.elements:
        yield el, polygon_rule(el.vertices, degree)


def compute_errors(solution, case=MANUFACTURED, quad_degree=None):
    """Relative errors ``(err_H1_u, err_L2_u, err_L2_p)``.

    The velocity is compared through ``Pi0_k u_h`` element by element (the
    enhanced moments give this projection for either variant); the H1 part is
    the broken seminorm.  Denominators use the same quadrature.
    """
    system = solution.system
    k = system.config.k
    deg = 2 * k + 4 if quad_degree is None else quad_degree
    dmap = system.dofmap
    num = np.zeros(3)
    den = np.zeros(3)
    for e, (el, (pts, wts)) in enumerate(_error_rules(system, deg)):
        pr = system.projectors[e]
        b = el.basis
        loc = solution.velocity[dmap.element_dofs(e)]
        coef = pr.p0 @ loc  # (2, N_k)
        mono = monomials(pts, b.center, b.h, k)
        grad = monomial_gradients(pts, b.center, b.h, k)
        uh = mono @ coef.T
        guh = np.einsum("pja,cj->pca", grad, coef)
        ph = monomials(pts, b.center, b.h, k - 1) @ solution.pressure[dmap.pressure_dofs(e)]
        u, p = case.u(pts), case.p(pts)
        gu = case.grad_u(pts)
        num += [wts @ ((gu - guh) ** 2).sum((1, 2)), wts @ ((u - uh) ** 2).sum(1),
                wts @ (p - ph) ** 2]
        den += [wts @ (gu ** 2).sum((1, 2)), wts @ (u ** 2).sum(1), wts @ p ** 2]
    # absolute error where the exact quantity vanishes (e.g. p = 0)
    den = np.where(den > 0.0, den, 1.0)
    return tuple(float(v) for v in np.sqrt(num / den))


def divergence_norms(solution, degrees=None):
    """``||Pi0_l div u_h||_0`` over the mesh for each requested degree.

    Defaults to ``(k-1, k, k+1)``.  Degrees above ``k-1`` use moments of
    ``Pi0_k u_h``, which for the regular variant are the elliptic-projection
    substitutes (a post-processing, not a property of that space).
    """
    system = solution.system
    k = system.config.k
    if degrees is None:
        degrees = (k - 1, k, k + 1)
    dmap = system.dofmap
    sq = np.zeros(len(degrees))
    for e, pr in enumerate(system.projectors):
        loc = solution.velocity[dmap.element_dofs(e)]
        b = pr.basis
        for i, d in enumerate(degrees):
            c = (pr.pdiv if d == k - 1 else pr.div_projection(d)) @ loc
            nd = n_poly(d)
            sq[i] += c @ b.mass[:nd, :nd] @ c
    return tuple(float(v) for v in np.sqrt(np.maximum(sq, 0.0)))


# ---------------------------------------------------------------- studies

def observed_rates(h, err):
    """Rates between consecutive levels, ``log(e_l/e_{l+1}) / log(h_l/h_{l+1})``."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    out = [float("nan")]
    for i in range(1, len(h)):
        if err[i] > 0 and err[i - 1] > 0:
            out.append(float(np.log(err[i - 1] / err[i]) / np.log(h[i - 1] / h[i])))
        else:
            out.append(float("nan"))
    return out


def ls_slope(h, err, last=3):
    """Least-squares slope of ``log err`` against ``log h`` over the last ``last`` points."""
    h = np.asarray(h, dtype=float)[-last:]
    err = np.asarray(err, dtype=float)[-last:]
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


@dataclass
class StudyRow:
    family: str
    level: int
    k: int
    formulation: str
    enhanced: bool
    h: float = float("nan")
    n_dof_vel: int = 0
    n_dof_p: int = 0
    err_h1_u: float = float("nan")
    err_l2_u: float = float("nan")
    err_l2_p: float = float("nan")
    div_km1: float = float("nan")
    div_k: float = float("nan")
    div_kp1: float = float("nan")
    rate_h1: float = float("nan")
    rate_l2_u: float = float("nan")
    rate_l2_p: float = float("nan")
    status: str = "ok"

    @property
    def key(self):
        return (self.family, self.k, self.formulation, self.enhanced)


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)

    def series(self, family, k, formulation, enhanced):
        return [r for r in self.rows
                if r.key == (family, k, formulation, enhanced) and r.status.startswith("ok")]

    def slope(self, family, k, formulation, enhanced, column, last=3):
        rows = self.series(family, k, formulation, enhanced)
        return ls_slope([r.h for r in rows], [getattr(r, column) for r in rows], last)

    def to_csv(self, stream):
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, name)) for name in CSV_HEADER])

    def csv_text(self):
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.10e}"
    return str(v)


def run_point(family, level, config, seed=0, case=MANUFACTURED, mesh=None, observer=None):
    """One grid point.  ``observer(row, solution)`` is called after a successful solve."""
    row = StudyRow(family=family, level=level, k=config.k,
                   formulation=config.formulation, enhanced=config.enhanced)
    try:
        if mesh is None:
            mesh = generate(family, level, seed)
        row.h = mesh_diameter(mesh)
        sol = solve_case(mesh, config, case)
        row.n_dof_vel = sol.system.n_vel
        row.n_dof_p = sol.system.n_pressure
        row.err_h1_u, row.err_l2_u, row.err_l2_p = compute_errors(sol, case)
        row.div_km1, row.div_k, row.div_kp1 = divergence_norms(sol)
        if not config.enhanced:
            row.status = "ok;postprocessed-div"
        if observer is not None:
            observer(row, sol)
    except Exception as exc:  # recorded per row; the study goes on
        log.warning("%s level %d %s failed: %s", family, level, config, exc)
        row.status = f"error: {type(exc).__name__}: {exc}"
    return row


def run_study(families, levels, ks, formulations, variants, seed=0, out=None,
              case=MANUFACTURED, mesh_cache=None, observer=None):
    """Run the full grid in deterministic order and fill per-key rates.

    ``variants`` is an iterable of booleans (True = enhanced).  ``out`` may be a
    path or text stream receiving the CSV.  ``mesh_cache`` maps
    ``(family, level, seed)`` to meshes and is filled as meshes get generated.
    """
    report = ConvergenceReport()
    meshes = {} if mesh_cache is None else mesh_cache
    for fam in families:
        for k in ks:
            for form in formulations:
                for enh in variants:
                    cfg = SchemeConfig(form, k, enh)
                    series = []
                    for lev in levels:
                        key = (fam, lev, seed)
                        if key not in meshes:
                            try:
                                meshes[key] = generate(fam, lev, seed)
                            except Exception as exc:
                                meshes[key] = exc
                        mesh = meshes[key]
                        if isinstance(mesh, Exception):
                            row = StudyRow(fam, lev, k, cfg.formulation, enh,
                                           status=f"error: {type(mesh).__name__}: {mesh}")
                        else:
                            row = run_point(fam, lev, cfg, seed, case, mesh, observer)
                        series.append(row)
                    _fill_rates(series)
                    report.rows.extend(series)
    if out is not None:
        if hasattr(out, "write"):
            report.to_csv(out)
        else:
            with open(out, "w", newline="") as fh:
                report.to_csv(fh)
    return report


def _fill_rates(series):
    prev = None
    for r in series:
        if not r.status.startswith("ok"):
            prev = None
            continue
        if prev is not None:
            for col, rate in (("err_h1_u", "rate_h1"), ("err_l2_u", "rate_l2_u"),
                              ("err_l2_p", "rate_l2_p")):
                setattr(r, rate, observed_rates([prev.h, r.h],
                                                [getattr(prev, col), getattr(r, col)])[1])
        prev = r
