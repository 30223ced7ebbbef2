"""Degrees of freedom and polynomial projectors of the two velocity spaces.

Both formulations share the same element machinery.  A local DOF vector is
turned into (i) the velocity trace at boundary Gauss points, reconstructed
edge by edge from vertex values and edge moments, and (ii) the cell moments
``int_P v_c m_a`` for ``|a| <= k-2``.  Every projector is then an
integration-by-parts formula evaluated on those two pieces of data.

Local DOF layouts (``n`` vertices/edges, ``N2 = dim P_{k-2}``):

F1, per component block ``c`` of size ``n + n*k + N2``
    vertex values, then edge moments edge by edge, then cell moments.
F2
    ``2n`` vertex values (vertex-major, x then y), ``n*k`` normal moments,
    ``n*(k-1)`` tangential moments, then ``N2`` x-moments and ``N2`` y-moments.

Edge moments are taken against ``t**j`` with ``t = (s - s_mid)/h_E`` along the
global edge direction (low to high vertex index), normal/tangential
components against the global ``n_E`` and ``t_E``.  The DOF value on a shared
edge is therefore the same for both neighbours.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import ConfigurationError, ConditioningError, GeometryError
from .mesh import build_mesh
from .polyquad import (derivative_matrix, edge_rule, element_basis, monomials,
                       monomial_gradients, n_poly, signed_area)

FORMULATIONS = ("F1", "F2")


@dataclass(frozen=True)
class SchemeConfig:
    formulation: str = "F1"
    k: int = 1
    enhanced: bool = True

    def __post_init__(self):
        f = str(self.formulation).upper()
        if f not in FORMULATIONS:
            raise ConfigurationError(f"formulation must be F1 or F2, got {self.formulation!r}")
        object.__setattr__(self, "formulation", f)
        if int(self.k) != self.k or self.k < 1:
            raise ConfigurationError(f"degree k must be an integer >= 1, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "enhanced", bool(self.enhanced))

    @property
    def kbar(self):
        """Degree of the load projection."""
        return self.k if self.enhanced else max(0, self.k - 2)


def dof_count(config, n_edges):
    """Local ``(n_velocity, n_pressure)`` for an element with ``n_edges`` edges."""
    k, n = config.k, n_edges
    n2 = n_poly(k - 2)
    if config.formulation == "F1":
        nv = 2 * (n + k * n + n2)
    else:
        nv = 2 * n + k * n + (k - 1) * n + 2 * n2
    return nv, n_poly(k - 1)


# ---------------------------------------------------------------- edge traces

@lru_cache(maxsize=None)
def trace_interpolation(m):
    """Inverse of the DOF matrix of ``P_{m+1}`` on [-1/2, 1/2].

    Columns of the result map ``[v(-1/2), v(1/2), mom_0, ..., mom_{m-1}]``,
    ``mom_i = int t**i v dt``, to monomial coefficients ``a_p`` of ``v = sum a_p t**p``.
    """
    size = m + 2
    p = np.arange(size)
    mat = np.zeros((size, size))
    mat[0] = (-0.5) ** p
    mat[1] = 0.5 ** p
    for i in range(m):
        e = p + i + 1
        mat[2 + i] = (0.5 ** e - (-0.5) ** e) / e
    inv = np.linalg.inv(mat)
    inv.setflags(write=False)
    return inv


# ---------------------------------------------------------------- element

class LocalElement:
    """Geometry, DOF layout and sampling operators of one mesh element."""

    def __init__(self, config, mesh, e, quad_degree=None, n_edge_points=None):
        self.config = config
        self.mesh = mesh
        self.index = e
        k = config.k
        self.k = k
        self.cycle = mesh.elements[e]
        self.vertices = mesh.vertices[self.cycle]
        self.n = len(self.cycle)
        self.edge_ids = mesh.element_edges[e]
        self.signs = mesh.element_signs[e]
        self.quad_degree = 2 * k + 2 if quad_degree is None else quad_degree
        # k+2 Gauss points integrate trace (k+1) x test (k+1) exactly
        self.n_trace_points = k + 2
        self.n_edge_points = k + 3 if n_edge_points is None else n_edge_points
        self.basis = element_basis(self.vertices, k + 1, self.quad_degree, element=e)
        self.n_vel, self.n_pre = dof_count(config, self.n)
        self.n2 = n_poly(k - 2)

    # -- layout

    @cached_property
    def global_dofs(self):
        return DofMap(self.config, self.mesh).element_dofs(self.index)

    def _edge_geometry(self, i, npts):
        """Gauss rule on local edge ``i`` in the global direction, plus local ends."""
        a, b = self.cycle[i], self.cycle[(i + 1) % self.n]
        lo, hi = (a, b) if a < b else (b, a)
        rule = edge_rule(self.mesh.vertices[lo], self.mesh.vertices[hi], npts)
        # local vertex positions (0..n-1) of the global start and end
        start = i if a < b else (i + 1) % self.n
        end = (i + 1) % self.n if a < b else i
        return rule, start, end

    def _vertex_cols(self, j, comp):
        if self.config.formulation == "F1":
            return comp * (self.n + self.n * self.k + self.n2) + j
        return 2 * j + comp

    def _edge_cols(self, i):
        k, n = self.k, self.n
        if self.config.formulation == "F1":
            blk = n + n * k + self.n2
            return [c * blk + n + i * k + np.arange(k) for c in (0, 1)]
        normal = 2 * n + i * k + np.arange(k)
        tangential = 2 * n + n * k + i * (k - 1) + np.arange(k - 1)
        return [normal, tangential]

    def cell_cols(self, comp):
        k, n = self.k, self.n
        if self.config.formulation == "F1":
            blk = n + n * k + self.n2
            return comp * blk + n + n * k + np.arange(self.n2)
        return 2 * n + n * k + n * (k - 1) + comp * self.n2 + np.arange(self.n2)

    # -- boundary trace

    @cached_property
    def boundary(self):
        """Boundary Gauss points, weights, outward normals and trace operator.

        Returns ``(points, weights, normals, trace)`` where ``trace`` has shape
        ``(npts, 2, n_vel)`` and maps a DOF vector to the velocity at ``points``.
        """
        k, nv = self.k, self.n_vel
        pts, wts, nrm, blocks = [], [], [], []
        for i in range(self.n):
            rule, start, end = self._edge_geometry(i, self.n_trace_points)
            g = self.edge_ids[i]
            n_e = self.mesh.normals[g]
            t_e = np.array([n_e[1], -n_e[0]])
            tr = np.zeros((len(rule.t), 2, nv))
            if self.config.formulation == "F1":
                vand = rule.monomials(k + 1) @ trace_interpolation(k)
                ecols = self._edge_cols(i)
                for c in (0, 1):
                    tr[:, c, self._vertex_cols(start, c)] += vand[:, 0]
                    tr[:, c, self._vertex_cols(end, c)] += vand[:, 1]
                    tr[:, c, ecols[c]] += vand[:, 2:]
            else:
                ncols, tcols = self._edge_cols(i)
                vn = rule.monomials(k + 1) @ trace_interpolation(k)
                vt = rule.monomials(k) @ trace_interpolation(k - 1)
                for comp, dirvec, vand, mcols in ((0, n_e, vn, ncols), (1, t_e, vt, tcols)):
                    piece = np.zeros((len(rule.t), nv))
                    for c in (0, 1):
                        piece[:, self._vertex_cols(start, c)] += vand[:, 0] * dirvec[c]
                        piece[:, self._vertex_cols(end, c)] += vand[:, 1] * dirvec[c]
                    piece[:, mcols] += vand[:, 2:]
                    tr += piece[:, None, :] * dirvec[None, :, None]
            pts.append(rule.points)
            wts.append(rule.weights)
            nrm.append(np.broadcast_to(self.signs[i] * n_e, rule.points.shape))
            blocks.append(tr)
        return (np.vstack(pts), np.concatenate(wts), np.vstack(nrm),
                np.concatenate(blocks, axis=0))

    @cached_property
    def cell_moment_operator(self):
        """``(2, N2, n_vel)`` map from DOFs to ``int_P v_c m_a``, ``|a| <= k-2``."""
        op = np.zeros((2, self.n2, self.n_vel))
        for c in (0, 1):
            op[c][np.arange(self.n2), self.cell_cols(c)] = self.basis.area
        return op

    # -- DOF functionals

    @cached_property
    def _samples(self):
        """Sample points and the linear map from sampled field values to DOFs."""
        k, n, nv = self.k, self.n, self.n_vel
        b = self.basis
        pts = [self.vertices]
        rows = []  # (dof index, sample index, component, weight)
        for j in range(n):
            for c in (0, 1):
                rows.append((self._vertex_cols(j, c), j, c, 1.0))
        offset = n
        for i in range(n):
            rule, _, _ = self._edge_geometry(i, self.n_edge_points)
            ids = offset + np.arange(len(rule.t))
            pts.append(rule.points)
            offset += len(rule.t)
            w = rule.weights / rule.length
            if self.config.formulation == "F1":
                ecols = self._edge_cols(i)
                for c in (0, 1):
                    for j in range(k):
                        for s, ws in zip(ids, w * rule.t ** j):
                            rows.append((ecols[c][j], s, c, ws))
            else:
                n_e = self.mesh.normals[self.edge_ids[i]]
                t_e = np.array([n_e[1], -n_e[0]])
                ncols, tcols = self._edge_cols(i)
                for cols, dirvec, m in ((ncols, n_e, k), (tcols, t_e, k - 1)):
                    for j in range(m):
                        for s, ws in zip(ids, w * rule.t ** j):
                            for c in (0, 1):
                                rows.append((cols[j], s, c, ws * dirvec[c]))
        if self.n2:
            mono = b.monomials(b.points, self.k - 2)
            ids = offset + np.arange(len(b.points))
            pts.append(b.points)
            wm = mono * (b.weights / b.area)[:, None]
            for c in (0, 1):
                cols = self.cell_cols(c)
                for a in range(self.n2):
                    for s, ws in zip(ids, wm[:, a]):
                        rows.append((cols[a], s, c, ws))
        pts = np.vstack(pts)
        op = np.zeros((nv, len(pts), 2))
        for d, s, c, w in rows:
            op[d, s, c] += w
        return pts, op.reshape(nv, -1)

    def dofs_of(self, field):
        """Local DOFs of a vector field ``field(points) -> (npts, 2)``.

        ``field`` may also return ``(npts, 2, m)`` to interpolate ``m`` fields at once.
        """
        pts, op = self._samples
        vals = np.asarray(field(pts), dtype=float)
        if vals.ndim == 2:
            return op @ vals.reshape(-1)
        return op @ vals.reshape(len(pts) * 2, -1)

    @cached_property
    def poly_dofs(self):
        """``D``: DOFs of the vector monomial basis of ``[P_k]^2``.

        Column ``c * N_k + j`` is the DOF vector of ``m_j e_c``.
        """
        b = self.basis
        nk = n_poly(self.k)

        def field(p):
            m = monomials(p, b.center, b.h, self.k)
            out = np.zeros((len(p), 2, 2 * nk))
            out[:, 0, :nk] = m
            out[:, 1, nk:] = m
            return out

        return self.dofs_of(field)


# ---------------------------------------------------------------- projectors

@dataclass(frozen=True, eq=False)
class ProjectorSet:
    """Element projectors acting on local DOF vectors.

    Monomial-coefficient outputs:

    ``pnabla``  (2, N_k, n)           elliptic projection per component
    ``pgrad``   (2, 2, N_{k-1}, n)    [c, d] -> Pi0_{k-1} d v_c / d x_d
    ``pdiv``    (N_{k-1}, n)          Pi0_{k-1} div v
    ``p0``      (2, N_k, n)           Pi0_k v, degree k-1 and k moments taken from pnabla
    ``p0bar``   (2, N_kbar, n)        Pi0_kbar v used by the load

    ``pgrad_orth`` holds ``pgrad`` in the orthonormal basis (its Gram is I).
    """

    element: LocalElement
    pnabla: np.ndarray
    pgrad: np.ndarray
    pgrad_orth: np.ndarray
    pdiv: np.ndarray
    p0: np.ndarray
    p0bar: np.ndarray
    moments: np.ndarray

    @property
    def basis(self):
        return self.element.basis

    def div_projection(self, degree):
        """Monomial coefficients of ``Pi0_degree div v`` for ``degree <= k+1``.

        Uses the moments of ``Pi0_k v``; for ``degree > k-1`` these include the
        elliptic-projection substitutes of the enhanced space.
        """
        return _div_projection(self.element, self.moments, degree)


def _orth(basis, degree):
    n = n_poly(degree)
    return basis.ortho[:n, :n]


def _div_projection(el, moments, degree):
    k = el.k
    if degree > k + 1:
        raise ConfigurationError(f"divergence projection degree {degree} > k+1")
    if degree < 0:
        return np.zeros((0, el.n_vel))
    b = el.basis
    pts, wts, nrm, tr = el.boundary
    lo = _orth(b, degree)
    phi_b = monomials(pts, b.center, b.h, degree) @ lo.T
    flux = np.einsum("p,pc,pcn->pn", wts, nrm, tr)
    rhs = phi_b.T @ flux
    if degree >= 1:
        nm = n_poly(degree - 1)
        for c in (0, 1):
            dphi = lo @ derivative_matrix(degree, c, b.h).T  # (nd, nm)
            rhs -= dphi @ moments[c, :nm]
    return lo.T @ rhs


def build_projectors(config, element):
    """Compute every projector of ``element`` (a :class:`LocalElement`)."""
    el = element
    k, b = config.k, element.basis
    nv = el.n_vel
    pts, wts, nrm, tr = el.boundary
    cm = el.cell_moment_operator
    n1, n2, nk = n_poly(k - 1), n_poly(k - 2), n_poly(k)

    # Pi0_{k-1} grad, orthonormal coefficients
    l1 = _orth(b, k - 1)
    phi1_b = monomials(pts, b.center, b.h, k - 1) @ l1.T  # (npts, n1)
    g_orth = np.zeros((2, 2, n1, nv))
    for c in (0, 1):
        for d in (0, 1):
            bnd = phi1_b.T @ (wts[:, None] * nrm[:, d:d + 1] * tr[:, c, :])
            if k >= 2:
                dphi = l1 @ derivative_matrix(k - 1, d, b.h).T  # (n1, n2)
                bnd = bnd - dphi @ cm[c]
            g_orth[c, d] = bnd
    pgrad = np.einsum("ij,cdin->cdjn", l1, g_orth)

    # elliptic projection, per component
    lk = _orth(b, k)
    grad_k = monomial_gradients(b.points, b.center, b.h, k)
    gm = np.einsum("p,pia,pja->ij", b.weights, grad_k, grad_k)
    gram = lk @ gm @ lk.T
    phik_b = monomials(pts, b.center, b.h, k) @ lk.T
    gradk_b = monomial_gradients(pts, b.center, b.h, k)
    dn_b = np.einsum("pja,pa->pj", gradk_b, nrm) @ lk.T  # grad(phi).n at boundary
    gram[0] = wts @ phik_b
    lap = None
    if k >= 2:
        lap = (derivative_matrix(k - 1, 0, b.h) @ derivative_matrix(k, 0, b.h)
               + derivative_matrix(k - 1, 1, b.h) @ derivative_matrix(k, 1, b.h))
        lap = lk @ lap.T  # (nk, n2): Laplacians of orthonormal functions
    pn_orth = np.zeros((2, nk, nv))
    for c in (0, 1):
        rhs = dn_b.T @ (wts[:, None] * tr[:, c, :])
        if lap is not None:
            rhs = rhs - lap @ cm[c]
        rhs[0] = wts @ tr[:, c, :]
        pn_orth[c] = rhs
    try:
        sol = np.linalg.solve(gram, pn_orth.transpose(1, 0, 2).reshape(nk, -1))
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("singular elliptic projection system", el.index) from exc
    if not np.all(np.isfinite(sol)):
        raise ConditioningError("non-finite elliptic projection", el.index)
    pn_orth = sol.reshape(nk, 2, nv).transpose(1, 0, 2)
    pnabla = np.einsum("ij,cin->cjn", lk, pn_orth)

    # moments int_P v_c m_j, j < N_k: cell DOFs below degree k-1, Pi_nabla above
    hk = b.mass[:nk, :nk]
    moments = np.einsum("ij,cjn->cin", hk, pnabla)
    moments[:, :n2] = cm
    p0 = np.einsum("ij,cjn->cin", np.linalg.inv(hk), moments)
    kb = config.kbar
    nb = n_poly(kb)
    p0bar = np.einsum("ij,cjn->cin", np.linalg.inv(b.mass[:nb, :nb]), moments[:, :nb])

    pdiv_orth = g_orth[0, 0] + g_orth[1, 1]
    pdiv = l1.T @ pdiv_orth
    return ProjectorSet(element=el, pnabla=pnabla, pgrad=pgrad, pgrad_orth=g_orth,
                        pdiv=pdiv, p0=p0, p0bar=p0bar, moments=moments)


# ---------------------------------------------------------------- global map

class DofMap:
    """Global numbering of velocity and pressure DOFs.

    F1: component-blocked, ``c * n_scalar + s`` with scalar ids ordered as
    vertices, edge moments (``k`` per edge), cell moments (``N2`` per element).
    F2: ``2 v + c`` for vertices, then normal, tangential and cell moments.
    Pressure DOFs are the ``dim P_{k-1}`` scaled-monomial coefficients of each
    element, numbered element by element.
    """

    def __init__(self, config, mesh):
        self.config = config
        self.mesh = mesh
        k = config.k
        self.n2 = n_poly(k - 2)
        nvx, ned, nel = mesh.n_vertices, mesh.n_edges, mesh.n_elements
        if config.formulation == "F1":
            self.n_scalar = nvx + ned * k + nel * self.n2
            self.n_vel = 2 * self.n_scalar
        else:
            self.n_vel = 2 * nvx + ned * k + ned * (k - 1) + nel * 2 * self.n2
        self.n_pre_local = n_poly(k - 1)
        self.n_pressure = nel * self.n_pre_local

    def element_dofs(self, e):
        cfg, mesh = self.config, self.mesh
        k = cfg.k
        cyc = mesh.elements[e]
        eids = mesh.element_edges[e]
        nvx, ned = mesh.n_vertices, mesh.n_edges
        n2 = self.n2
        if cfg.formulation == "F1":
            scal = np.concatenate([cyc, nvx + (eids[:, None] * k + np.arange(k)).ravel(),
                                   nvx + ned * k + e * n2 + np.arange(n2)])
            return np.concatenate([scal, self.n_scalar + scal]).astype(int)
        vert = (2 * cyc[:, None] + np.arange(2)).ravel()
        normal = 2 * nvx + (eids[:, None] * k + np.arange(k)).ravel()
        tang = 2 * nvx + ned * k + (eids[:, None] * (k - 1) + np.arange(k - 1)).ravel()
        cell = 2 * nvx + ned * k + ned * (k - 1) + e * 2 * n2 + np.arange(2 * n2)
        return np.concatenate([vert, normal, tang, cell]).astype(int)

    def pressure_dofs(self, e):
        return e * self.n_pre_local + np.arange(self.n_pre_local)

    def boundary_mask(self):
        """Boolean mask of velocity DOFs fixed by Dirichlet data."""
        cfg, mesh = self.config, self.mesh
        k, nvx, ned = cfg.k, mesh.n_vertices, mesh.n_edges
        mask = np.zeros(self.n_vel, dtype=bool)
        bv = np.flatnonzero(mesh.boundary_vertices)
        be = np.flatnonzero(mesh.boundary_edges)
        if cfg.formulation == "F1":
            scal = np.concatenate([bv, nvx + (be[:, None] * k + np.arange(k)).ravel()])
            mask[scal] = True
            mask[self.n_scalar + scal] = True
        else:
            mask[(2 * bv[:, None] + np.arange(2)).ravel()] = True
            mask[2 * nvx + (be[:, None] * k + np.arange(k)).ravel()] = True
            mask[2 * nvx + ned * k + (be[:, None] * (k - 1) + np.arange(k - 1)).ravel()] = True
        return mask


def single_element_mesh(polygon):
    """Wrap one CCW polygon as a one-element mesh (handy for local tests)."""
    v = np.asarray(polygon, dtype=float)
    return build_mesh(v, [list(range(len(v)))])


def interpolate(field, config, mesh, local_elements=None):
    """Global DOF vector whose DOFs are the functionals of ``field``.

    Shared DOFs are written by every incident element; the values agree because
    edge functionals use the global edge orientation.
    """
    dmap = DofMap(config, mesh)
    out = np.zeros(dmap.n_vel)
    for e in range(mesh.n_elements):
        el = local_elements[e] if local_elements is not None else LocalElement(config, mesh, e)
        out[dmap.element_dofs(e)] = el.dofs_of(field)
    return out


# ---------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class UnisolvenceReport:
    n_dofs: int
    smallest_singular_value: float
    largest_singular_value: float

    @property
    def condition(self):
        return self.largest_singular_value / self.smallest_singular_value


def unisolvence_check(config, polygon):
    """Smallest singular value of the DOF matrix of a spanning set of the space.

    The spanning set is: for each edge, hat functions at both end vertices and
    the edge bubbles ``t**j (1/4 - t**2)`` of the trace space (F2: separately
    for normal and tangential components), and interior functions identified
    with the cell moments, whose DOF block is the scaled mass matrix
    ``H_{k-2} / |P|``.  The matrix is square; a positive smallest singular value
    means the DOFs determine the boundary trace and interior moments.
    """
    v = np.asarray(polygon, dtype=float)
    if len(v) < 3 or signed_area(v) <= 0.0:
        raise GeometryError("element has zero area or is clockwise")
    mesh = single_element_mesh(v)
    el = LocalElement(config, mesh, 0)
    k, n = config.k, el.n
    nv = el.n_vel
    cols = []
    gauss = max(k + 3, 4)
    for i in range(n):
        rule, start, end = el._edge_geometry(i, gauss)
        w = rule.weights / rule.length
        t = rule.t
        n_e = mesh.normals[el.edge_ids[i]]
        t_e = np.array([n_e[1], -n_e[0]])
        comps = ((0, np.array([1.0, 0.0]), k), (1, np.array([0.0, 1.0]), k))
        if config.formulation == "F2":
            comps = ((0, n_e, k), (1, t_e, k - 1))
        ecols = el._edge_cols(i)
        for slot, dirvec, m in comps:
            for j in range(m):
                bubble = t ** j * (0.25 - t ** 2)
                col = np.zeros(nv)
                for jj in range(m):
                    col[ecols[slot][jj]] = np.sum(w * t ** jj * bubble)
                cols.append(col)
    # vertex hats: value 1 at one vertex in one component, linear on both edges
    for j in range(n):
        for c in (0, 1):
            col = np.zeros(nv)
            col[el._vertex_cols(j, c)] = 1.0
            for i in ((j - 1) % n, j):
                rule, start, end = el._edge_geometry(i, gauss)
                w = rule.weights / rule.length
                t = rule.t
                hat = 0.5 - t if start == j else 0.5 + t
                ecols = el._edge_cols(i)
                if config.formulation == "F1":
                    for jj in range(k):
                        col[ecols[c][jj]] += np.sum(w * t ** jj * hat)
                else:
                    n_e = mesh.normals[el.edge_ids[i]]
                    t_e = np.array([n_e[1], -n_e[0]])
                    for jj in range(k):
                        col[ecols[0][jj]] += n_e[c] * np.sum(w * t ** jj * hat)
                    for jj in range(k - 1):
                        col[ecols[1][jj]] += t_e[c] * np.sum(w * t ** jj * hat)
            cols.append(col)
    mat = np.column_stack(cols) if cols else np.zeros((nv, 0))
    if el.n2:
        hs = el.basis.mass[:el.n2, :el.n2] / el.basis.area
        interior = np.zeros((nv, 2 * el.n2))
        for c in (0, 1):
            interior[np.ix_(el.cell_cols(c), c * el.n2 + np.arange(el.n2))] = hs
        mat = np.hstack([mat, interior])
    if mat.shape != (nv, nv):
        raise GeometryError(f"DOF matrix is {mat.shape}, expected square of size {nv}")
    s = np.linalg.svd(mat, compute_uv=False)
    return UnisolvenceReport(n_dofs=nv, smallest_singular_value=float(s.min()),
                             largest_singular_value=float(s.max()))
