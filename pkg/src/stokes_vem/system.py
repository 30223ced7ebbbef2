"""Global saddle-point system: assembly, boundary conditions and solve.

The assembled operator is

    [ A   B^T  0 ] [u]   [f]
    [ B   0    c ] [p] = [0]
    [ 0   c^T  0 ] [l]   [0]

with ``B`` the discrete ``b(v, q) = -int q div v`` and ``c`` the row
``int_P q_a`` enforcing a zero-mean pressure through the multiplier ``l``.
Pressure unknowns are coefficients in the element-wise L2-orthonormal basis
``q = L m`` so that a residual in a ``B`` row is directly an L2 residual of
``Pi0_{k-1} div u``; :func:`solve` returns scaled-monomial coefficients.
"""
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AssemblyError, SolverError
from .polyquad import n_poly
from .stokes_local import local_divergence, local_load, local_stiffness
from .vemspace import DofMap, LocalElement, build_projectors

log = logging.getLogger(__name__)


@dataclass(eq=False)
class GlobalSystem:
    mesh: object
    config: object
    dofmap: DofMap
    A: sp.csr_matrix
    B: sp.csr_matrix
    f: np.ndarray
    mean_row: np.ndarray
    flux_row: np.ndarray       # v -> int_{dOmega} v.n (sum of int_P div v)
    elements: list = field(repr=False)
    projectors: list = field(repr=False)

    def pressure_to_monomial(self, p):
        """Map orthonormal-basis pressure coefficients to scaled-monomial ones."""
        out = np.empty_like(p)
        for e, el in enumerate(self.elements):
            pd = self.dofmap.pressure_dofs(e)
            out[pd] = el.basis.ortho[:len(pd), :len(pd)].T @ p[pd]
        return out

    @property
    def n_vel(self):
        return self.dofmap.n_vel

    @property
    def n_pressure(self):
        return self.dofmap.n_pressure

    def matrix(self):
        """Full (unconstrained-velocity) saddle-point matrix with the mean row."""
        c = sp.csr_matrix(self.mean_row[:, None])
        return sp.bmat([[self.A, self.B.T, None],
                        [self.B, None, c],
                        [None, c.T, None]], format="csr")


def build_elements(mesh, config):
    els = [LocalElement(config, mesh, e) for e in range(mesh.n_elements)]
    return els, [build_projectors(config, el) for el in els]


def assemble(mesh, config, f=None, elements=None, projectors=None):
    """Scatter-add element blocks in element order.

    ``f`` is the body force ``f(points) -> (npts, 2)``; ``None`` means zero.
    """
    dmap = DofMap(config, mesh)
    if elements is None:
        elements, projectors = build_elements(mesh, config)
    ai, aj, av = [], [], []
    bi, bj, bv = [], [], []
    rhs = np.zeros(dmap.n_vel)
    mean = np.zeros(dmap.n_pressure)
    flux = np.zeros(dmap.n_vel)
    for e, (el, pr) in enumerate(zip(elements, projectors)):
        vd = dmap.element_dofs(e)
        pd = dmap.pressure_dofs(e)
        if len(vd) != el.n_vel or vd.max() >= dmap.n_vel or len(np.unique(vd)) != len(vd):
            raise AssemblyError(f"element {e}: inconsistent velocity DOF indices")
        a = local_stiffness(pr)
        orth = el.basis.ortho[:len(pd), :len(pd)]
        bm = local_divergence(pr)
        np.add.at(flux, vd, bm[0])
        b = -orth @ bm
        if a.shape != (len(vd), len(vd)) or b.shape != (len(pd), len(vd)):
            raise AssemblyError(f"element {e}: block shape does not match DOF map")
        ai.append(np.repeat(vd, len(vd)))
        aj.append(np.tile(vd, len(vd)))
        av.append(a.ravel())
        bi.append(np.repeat(pd, len(vd)))
        bj.append(np.tile(vd, len(pd)))
        bv.append(b.ravel())
        if f is not None:
            np.add.at(rhs, vd, local_load(pr, f, config))
        mean[pd] = orth @ el.basis.mass[0, :len(pd)]
    A = sp.csr_matrix((np.concatenate(av), (np.concatenate(ai), np.concatenate(aj))),
                      shape=(dmap.n_vel, dmap.n_vel))
    B = sp.csr_matrix((np.concatenate(bv), (np.concatenate(bi), np.concatenate(bj))),
                      shape=(dmap.n_pressure, dmap.n_vel))
    # exact symmetry regardless of summation order
    A = ((A + A.T) * 0.5).tocsr()
    return GlobalSystem(mesh=mesh, config=config, dofmap=dmap, A=A, B=B, f=rhs,
                        mean_row=mean, flux_row=flux, elements=elements, projectors=projectors)


@dataclass(eq=False)
class ReducedSystem:
    system: GlobalSystem
    K: sp.csr_matrix
    rhs: np.ndarray
    interior: np.ndarray       # indices of free velocity DOFs
    boundary: np.ndarray       # indices of Dirichlet velocity DOFs
    boundary_values: np.ndarray


def boundary_values(system, g):
    """Dirichlet DOF values: the DOF functionals of ``g`` on boundary DOFs."""
    dmap = system.dofmap
    mask = dmap.boundary_mask()
    vals = np.zeros(dmap.n_vel)
    if g is None:
        return mask, vals
    mesh = system.mesh
    touching = np.unique(mesh.edge_elements[mesh.boundary_edges].ravel())
    # every boundary vertex lies on a boundary edge, so these elements cover all
    for e in touching[touching >= 0]:
        vd = dmap.element_dofs(e)
        loc = system.elements[e].dofs_of(g)
        sel = mask[vd]
        vals[vd[sel]] = loc[sel]
    return mask, vals


def apply_dirichlet(system, g=None, compatible=True):
    """Eliminate boundary velocity DOFs; returns a symmetric :class:`ReducedSystem`.

    With ``compatible`` the boundary DOF values get the smallest (Euclidean)
    correction that makes the discrete outflow vanish.  Interpolated data is
    only compatible up to quadrature and interpolation error; without the
    correction that residue ends up in ``div u_h`` through the multiplier.
    """
    mask, vals = boundary_values(system, g)
    inner = np.flatnonzero(~mask)
    bnd = np.flatnonzero(mask)
    if compatible and len(bnd):
        w = system.flux_row[bnd]
        ww = w @ w
        if ww > 0.0:
            vals[bnd] -= (w @ vals[bnd]) / ww * w
    A, B = system.A, system.B
    a_ii = A[inner][:, inner]
    a_ib = A[inner][:, bnd]
    b_i = B[:, inner]
    b_b = B[:, bnd]
    gb = vals[bnd]
    c = sp.csr_matrix(system.mean_row[:, None])
    K = sp.bmat([[a_ii, b_i.T, None],
                 [b_i, None, c],
                 [None, c.T, None]], format="csr")
    rhs = np.concatenate([system.f[inner] - a_ib @ gb, -(b_b @ gb), [0.0]])
    return ReducedSystem(system=system, K=K, rhs=rhs, interior=inner, boundary=bnd,
                         boundary_values=gb)


@dataclass(eq=False)
class DiscreteSolution:
    system: GlobalSystem
    velocity: np.ndarray
    pressure: np.ndarray
    multiplier: float
    residual: float


def _saddle_ordering(K, n_velocity):
    """Fill-reducing symmetric ordering for ``[A B^T c; B 0 .; c^T . 0]``.

    The velocity block keeps SuperLU's minimum-degree order of ``A``; each
    pressure is placed right after the last velocity unknown it couples to and
    the multiplier goes last, so every pivot is (structurally) nonzero without
    row exchanges.
    """
    n = K.shape[0]
    a = K[:n_velocity, :n_velocity].tocsc()
    try:
        rank = spla.splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                         options=dict(SymmetricMode=True)).perm_c
    except RuntimeError as exc:
        raise SolverError("velocity block is singular") from exc
    b = K[n_velocity:n - 1, :n_velocity].tocsr()
    counts = np.diff(b.indptr)
    last = np.full(b.shape[0], -1.0)
    rows = counts > 0
    if b.nnz:
        last[rows] = np.maximum.reduceat(rank[b.indices], b.indptr[:-1][rows])
    key = np.concatenate([rank.astype(float),
                          last + 0.5 + np.arange(b.shape[0]) / (2.0 * b.shape[0] + 2.0),
                          [np.inf]])
    return np.argsort(key, kind="stable")


def solve(reduced, rtol=1e-10):
    """Sparse LU solve of the reduced saddle-point system.

    The matrix is symmetrically equilibrated by its row maxima (the velocity,
    pressure and multiplier blocks scale with different powers of h) and
    permuted by :func:`_saddle_ordering` before factorization.  Up to three
    steps of iterative refinement are applied when the first solve misses
    ``rtol``.
    """
    K = reduced.K.tocsr()
    rhs = reduced.rhs
    rowmax = abs(K).max(axis=1).toarray().ravel()
    if np.any(rowmax == 0.0):
        raise SolverError("saddle-point matrix has an empty row")
    d = 1.0 / np.sqrt(rowmax)
    D = sp.diags(d)
    Ks = (D @ K @ D).tocsr()
    order = _saddle_ordering(Ks, len(reduced.interior))
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            lu = spla.splu(Ks[order][:, order].tocsc(), permc_spec="NATURAL",
                           diag_pivot_thresh=0.01, options=dict(SymmetricMode=True))
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise SolverError("singular saddle-point matrix: likely inf-sup failure "
                              "or a defective mesh") from exc

    def step(r):
        y = np.empty_like(r)
        y[order] = lu.solve(d[order] * r[order])
        return d * y

    x = step(rhs)
    scale = max(np.linalg.norm(rhs), spla.norm(K, 1) * np.linalg.norm(x), 1e-300)
    res = np.linalg.norm(K @ x - rhs) / scale
    for _ in range(3):
        if res <= rtol:
            break
        x = x + step(rhs - K @ x)
        res = np.linalg.norm(K @ x - rhs) / scale
    if not np.all(np.isfinite(x)) or res > rtol:
        raise SolverError(f"relative residual {res:.2e} exceeds {rtol:.0e}")
    sysm = reduced.system
    ni = len(reduced.interior)
    vel = np.zeros(sysm.n_vel)
    vel[reduced.interior] = x[:ni]
    vel[reduced.boundary] = reduced.boundary_values
    pre = sysm.pressure_to_monomial(x[ni:ni + sysm.n_pressure])
    log.debug("solved %d unknowns, relative residual %.2e", len(x), res)
    return DiscreteSolution(system=sysm, velocity=vel, pressure=pre,
                            multiplier=float(x[-1]), residual=float(res))


def write_coo(matrix, stream):
    """Dump a sparse matrix as ``row col value`` lines."""
    coo = sp.coo_matrix(matrix)
    stream.write(f"% {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
    for r, c, v in zip(coo.row, coo.col, coo.data):
        stream.write(f"{int(r)} {int(c)} {float(v)!r}\n")


def infsup_estimate(mesh, config, pressure_degree=None, elements=None, projectors=None):
    """Discrete inf-sup constant of the pair (velocity space, pressure space).

    ``beta_h**2`` is the smallest eigenvalue of ``B A^{-1} B^T`` against the
    pressure mass matrix on mean-zero pressures, with ``A`` the stabilized
    stiffness on interior velocity DOFs (a discrete H1 norm).  Dense; meant for
    small meshes.  ``pressure_degree`` defaults to ``k-1``.
    """
    if elements is None:
        elements, projectors = build_elements(mesh, config)
    dmap = DofMap(config, mesh)
    deg = config.k - 1 if pressure_degree is None else pressure_degree
    npl = n_poly(deg)
    npre = mesh.n_elements * npl
    A = np.zeros((dmap.n_vel, dmap.n_vel))
    B = np.zeros((npre, dmap.n_vel))
    M = np.zeros((npre, npre))
    const = np.zeros(npre)
    for e, (el, pr) in enumerate(zip(elements, projectors)):
        vd = dmap.element_dofs(e)
        pd = e * npl + np.arange(npl)
        A[np.ix_(vd, vd)] += local_stiffness(pr)
        B[np.ix_(pd, vd)] += local_divergence(pr, deg)
        M[np.ix_(pd, pd)] = el.basis.mass[:npl, :npl]
        const[pd[0]] = 1.0
    inner = np.flatnonzero(~dmap.boundary_mask())
    A = A[np.ix_(inner, inner)]
    B = B[:, inner]
    chol = sla.cho_factor(0.5 * (A + A.T))
    S = B @ sla.cho_solve(chol, B.T)
    # M-orthogonal complement of the constant pressure
    mc = M @ const
    Z = sla.null_space(mc[None, :])
    s = Z.T @ S @ Z
    m = Z.T @ M @ Z
    lam = sla.eigh(0.5 * (s + s.T), 0.5 * (m + m.T), eigvals_only=True)
    return float(np.sqrt(max(lam.min(), 0.0)))
