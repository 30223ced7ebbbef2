"""Polynomial bookkeeping and quadrature on polygons and edges.

Scaled monomials ``m_a(x) = ((x - x_P) / h_P) ** a`` are ordered by total
degree, and within a degree by decreasing power of x, so that index 0 is
the constant, 1 is x and 2 is y.  Because the ordering is graded, the
first ``n_poly(l)`` entries of a degree-``L`` basis span the polynomials of
degree ``l <= L``; every routine here relies on that prefix property.
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .errors import ConditioningError, ConfigurationError, GeometryError

AREA_TOL = 1e-14


def n_poly(degree):
    """Dimension of the bivariate polynomials of total degree <= degree."""
    if degree < 0:
        return 0
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def multi_indices(degree):
    """Canonically ordered multi-indices ``(a1, a2)`` with ``a1 + a2 <= degree``."""
    out = []
    for d in range(degree + 1):
        for a1 in range(d, -1, -1):
            out.append((a1, d - a1))
    return tuple(out)


def index_of(alpha):
    """Position of a multi-index in the canonical ordering."""
    a1, a2 = alpha
    d = a1 + a2
    return n_poly(d - 1) + (d - a1)


@lru_cache(maxsize=None)
def _derivative_pattern(degree, axis):
    exps = np.array(multi_indices(degree))
    rows, cols, vals = [], [], []
    for j, (a1, a2) in enumerate(exps):
        power = a1 if axis == 0 else a2
        if power == 0:
            continue
        lower = (a1 - 1, a2) if axis == 0 else (a1, a2 - 1)
        rows.append(index_of(lower))
        cols.append(j)
        vals.append(float(power))
    mat = np.zeros((n_poly(degree - 1), n_poly(degree)))
    mat[rows, cols] = vals
    mat.setflags(write=False)
    return mat


def derivative_matrix(degree, axis, h=1.0):
    """Matrix sending degree-``degree`` coefficients to those of the partial derivative.

    The result has ``n_poly(degree - 1)`` rows: d/dx m_a = (a1 / h) m_{a - e1}.
    """
    if axis not in (0, 1):
        raise ConfigurationError(f"axis must be 0 (x) or 1 (y), got {axis!r}")
    return _derivative_pattern(degree, axis) / h


def monomials(points, center, h, degree):
    """Values of the scaled monomials at ``points``; shape ``(npts, n_poly(degree))``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = (pts - center) / h
    exps = np.array(multi_indices(degree))
    # powers[:, p, axis] = s[:, axis] ** p
    powers = s[:, None, :] ** np.arange(degree + 1)[None, :, None]
    return powers[:, exps[:, 0], 0] * powers[:, exps[:, 1], 1]


def monomial_gradients(points, center, h, degree):
    """Gradients of the scaled monomials; shape ``(npts, n_poly(degree), 2)``."""
    vals = monomials(points, center, h, max(degree - 1, 0))
    n = n_poly(degree)
    out = np.zeros((vals.shape[0], n, 2))
    if degree == 0:
        return out
    out[:, :, 0] = vals @ derivative_matrix(degree, 0, h)
    out[:, :, 1] = vals @ derivative_matrix(degree, 1, h)
    return out


# ---------------------------------------------------------------- geometry

def signed_area(vertices):
    v = np.asarray(vertices, dtype=float)
    # shoelace relative to the vertex mean: no cancellation for small, far-off polygons
    v = v - v.mean(axis=0)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def centroid(vertices):
    v = np.asarray(vertices, dtype=float)
    shift = v.mean(axis=0)
    v = v - shift
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    if abs(a) <= AREA_TOL:
        raise GeometryError(f"degenerate polygon (area {a:.3e})")
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return np.array([cx, cy]) + shift


def diameter(vertices):
    v = np.asarray(vertices, dtype=float)
    d = v[:, None, :] - v[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1)).max())


def _inside_all_edges(vertices, point, tol=1e-12):
    v = np.asarray(vertices, dtype=float)
    e = np.roll(v, -1, axis=0) - v
    r = point - v
    cross = e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0]
    return bool(np.all(cross > tol * (e ** 2).sum(1)))


def _is_ear(v, idx, i):
    n = len(idx)
    a, b, c = v[idx[(i - 1) % n]], v[idx[i]], v[idx[(i + 1) % n]]
    turn = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if turn <= 0.0:
        return False
    tri = np.array([a, b, c])
    for j in range(n):
        if j in ((i - 1) % n, i, (i + 1) % n):
            continue
        p = v[idx[j]]
        # reflex/collinear vertices touching the candidate ear disqualify it
        e = np.roll(tri, -1, axis=0) - tri
        r = p - tri
        cross = e[:, 0] * r[:, 1] - e[:, 1] * r[:, 0]
        if np.all(cross >= -1e-14):
            return False
    return True


def ear_clip(vertices):
    """Triangulate a simple CCW polygon; returns an ``(n-2, 3)`` index array."""
    v = np.asarray(vertices, dtype=float)
    idx = list(range(len(v)))
    tris = []
    guard = 0
    while len(idx) > 3:
        for i in range(len(idx)):
            if _is_ear(v, idx, i):
                n = len(idx)
                tris.append((idx[(i - 1) % n], idx[i], idx[(i + 1) % n]))
                del idx[i]
                break
        else:
            raise GeometryError("ear clipping failed: polygon is not simple")
        guard += 1
        if guard > len(v):
            raise GeometryError("ear clipping did not terminate")
    tris.append(tuple(idx))
    return np.array(tris, dtype=int)


def triangulate(vertices):
    """Sub-triangles of a polygon as an array of shape ``(ntri, 3, 2)``.

    Fans from the centroid when the centroid sees every edge (it lies in the
    kernel); otherwise falls back to ear clipping.
    """
    v = np.asarray(vertices, dtype=float)
    if signed_area(v) <= AREA_TOL:
        raise GeometryError("polygon must be CCW with positive area")
    c = centroid(v)
    if _inside_all_edges(v, c):
        nxt = np.roll(v, -1, axis=0)
        return np.stack([np.broadcast_to(c, v.shape), v, nxt], axis=1)
    return v[ear_clip(v)]


@lru_cache(maxsize=None)
def reference_triangle_rule(degree):
    """Collapsed Gauss-Jacobi rule on the triangle (0,0),(1,0),(0,1).

    Exact for total degree <= ``degree``; all weights positive; weights sum to 1/2.
    """
    n = max(1, math.ceil((degree + 1) / 2))
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    u = 0.5 * (1.0 + xj)
    wu = 0.25 * wj
    s = 0.5 * (1.0 + xl)
    ws = 0.5 * wl
    uu, ss = np.meshgrid(u, s, indexing="ij")
    pts = np.column_stack([uu.ravel(), (ss * (1.0 - uu)).ravel()])
    wts = np.outer(wu, ws).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def triangle_rule(triangles, degree):
    """Quadrature points/weights on a stack of triangles ``(ntri, 3, 2)``."""
    ref_p, ref_w = reference_triangle_rule(degree)
    tri = np.asarray(triangles, dtype=float)
    a = tri[:, 0, :]
    e1 = tri[:, 1, :] - a
    e2 = tri[:, 2, :] - a
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    pts = (a[:, None, :] + ref_p[None, :, 0:1] * e1[:, None, :]
           + ref_p[None, :, 1:2] * e2[:, None, :])
    wts = np.abs(det)[:, None] * ref_w[None, :]
    return pts.reshape(-1, 2), wts.ravel()


def polygon_rule(vertices, degree):
    """Quadrature rule on a simple polygon, exact for total degree <= ``degree``."""
    return triangle_rule(triangulate(vertices), degree)


# ---------------------------------------------------------------- bases

@dataclass(frozen=True, eq=False)
class ElementBasis:
    """Scaled monomials of one polygon together with their orthonormalization.

    ``ortho`` holds the coefficient matrix L whose rows express the
    orthonormal polynomials in the monomial basis, ``L @ mass @ L.T = I``.
    Because L is lower triangular, its leading ``n_poly(l)`` block
    orthonormalizes the degree-``l`` subspace.
    """

    element: int
    vertices: np.ndarray
    center: np.ndarray
    h: float
    area: float
    degree: int
    mass: np.ndarray
    ortho: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    quad_degree: int

    @property
    def dim(self):
        return n_poly(self.degree)

    def monomials(self, points, degree=None):
        return monomials(points, self.center, self.h,
                         self.degree if degree is None else degree)

    def gradients(self, points, degree=None):
        return monomial_gradients(points, self.center, self.h,
                                  self.degree if degree is None else degree)

    def evaluate(self, coefficients, points):
        c = np.asarray(coefficients, dtype=float)
        deg = _degree_from_size(c.shape[0])
        return self.monomials(points, deg) @ c

    def differentiate(self, coefficients, axis):
        c = np.asarray(coefficients, dtype=float)
        deg = _degree_from_size(c.shape[0])
        return derivative_matrix(deg, axis, self.h) @ c

    def integrate(self, values):
        """Quadrature of values sampled at ``self.points`` (leading axis)."""
        return np.tensordot(self.weights, values, axes=(0, 0))


def _degree_from_size(n):
    d = 0
    while n_poly(d) < n:
        d += 1
    if n_poly(d) != n:
        raise ConfigurationError(f"{n} is not the dimension of a polynomial space")
    return d


def orthonormalize(mass, element=None):
    """Inverse Cholesky factor of a Gram matrix, with a pivot guard."""
    try:
        chol = np.linalg.cholesky(mass)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("mass matrix is not positive definite", element) from exc
    piv = np.diag(chol) ** 2
    if piv.min() < 1e-13 * np.trace(mass):
        raise ConditioningError(
            f"Cholesky pivot {piv.min():.3e} below 1e-13*trace(H)", element)
    return np.linalg.solve(chol, np.eye(mass.shape[0]))


def element_basis(polygon, degree, quad_degree=None, element=-1):
    """Build the scaled-monomial basis of ``polygon`` up to ``degree``."""
    v = np.asarray(polygon, dtype=float)
    if quad_degree is None:
        quad_degree = 2 * degree
    if quad_degree < 2 * degree:
        raise ConfigurationError("quad_degree must be at least 2*degree")
    area = signed_area(v)
    if area <= AREA_TOL:
        raise GeometryError(f"element {element}: degenerate or clockwise polygon "
                            f"(signed area {area:.3e})")
    c = centroid(v)
    h = diameter(v)
    pts, wts = polygon_rule(v, quad_degree)
    m = monomials(pts, c, h, degree)
    mass = (m * wts[:, None]).T @ m
    mass = 0.5 * (mass + mass.T)
    ortho = orthonormalize(mass, element)
    return ElementBasis(element=element, vertices=v, center=c, h=h, area=area,
                        degree=degree, mass=mass, ortho=ortho, points=pts,
                        weights=wts, quad_degree=quad_degree)


@dataclass(frozen=True, eq=False)
class EdgeBasis:
    """Gauss rule and 1D scaled monomials on a segment.

    The local coordinate is ``t = (s - s_mid) / h_E`` in [-1/2, 1/2], where
    s is arclength measured from ``start`` towards ``end``.
    """

    start: np.ndarray
    end: np.ndarray
    length: float
    midpoint: np.ndarray
    tangent: np.ndarray
    t: np.ndarray
    points: np.ndarray
    weights: np.ndarray

    def monomials(self, degree, t=None):
        t = self.t if t is None else np.asarray(t, dtype=float)
        return t[:, None] ** np.arange(degree + 1)[None, :]

    def coordinate(self, points):
        return (np.asarray(points, dtype=float) - self.midpoint) @ self.tangent / self.length


@lru_cache(maxsize=None)
def _gauss(n):
    x, w = roots_legendre(n)
    return 0.5 * x, 0.5 * w


def edge_rule(start, end, n_points):
    """Gauss-Legendre rule with ``n_points`` nodes on the segment ``start -> end``."""
    if n_points < 1:
        raise ConfigurationError("n_points must be >= 1")
    a = np.asarray(start, dtype=float)
    b = np.asarray(end, dtype=float)
    d = b - a
    length = float(np.hypot(d[0], d[1]))
    if length <= 1e-14:
        raise GeometryError("zero-length edge")
    t, w = _gauss(n_points)
    mid = 0.5 * (a + b)
    tangent = d / length
    pts = mid + np.outer(t * length, tangent)
    return EdgeBasis(start=a, end=b, length=length, midpoint=mid, tangent=tangent,
                     t=t.copy(), points=pts, weights=w * length)
