"""Element matrices of the discrete Stokes problem."""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh, null_space

from .polyquad import monomials, n_poly, polygon_rule


@dataclass(frozen=True, eq=False)
class LocalStokesBlocks:
    element: int
    stiffness: np.ndarray     # A_P, (n_vel, n_vel)
    divergence: np.ndarray    # B_P, (n_pre, n_vel): int_P m_i Pi0_{k-1} div v
    load: np.ndarray          # f_P, (n_vel,)
    vel_dofs: np.ndarray
    pre_dofs: np.ndarray


def consistency_matrix(projectors):
    """``int_P Pi0 grad v : Pi0 grad w`` on DOF vectors (orthonormal basis => Gram = I)."""
    g = projectors.pgrad_orth
    return np.einsum("cdin,cdim->nm", g, g)


def consistency_rank(element):
    """Rank of the consistency block: ``dim [P_{k-1}]^{2x2}``, capped by ``n_vel``."""
    return min(element.n_vel, 4 * n_poly(element.k - 1))


def stabilization_scale(projectors, kc=None):
    """Mean nonzero eigenvalue of ``K_c``: ``trace(K_c) / rank(K_c)``.

    Dividing by ``n_vel`` instead would weaken the stabilization on polygons
    with many vertices, where ``n_vel`` grows but the rank does not.
    """
    if kc is None:
        kc = consistency_matrix(projectors)
    return np.trace(kc) / consistency_rank(projectors.element)


def stabilization_matrix(projectors, scale=None):
    """dofi-dofi stabilization on ``(I - D Pi_nabla)`` residuals.

    Scaled by :func:`stabilization_scale` unless ``scale`` is given.
    """
    el = projectors.element
    d = el.poly_dofs
    pn = np.concatenate([projectors.pnabla[0], projectors.pnabla[1]])
    resid = np.eye(el.n_vel) - d @ pn
    if scale is None:
        scale = stabilization_scale(projectors)
    return scale * resid.T @ resid


def local_stiffness(projectors, stabilized=True):
    kc = consistency_matrix(projectors)
    if not stabilized:
        return kc
    a = kc + stabilization_matrix(projectors, stabilization_scale(projectors, kc))
    return 0.5 * (a + a.T)


def local_divergence(projectors, pressure_degree=None):
    """Rows ``int_P m_i Pi0_l div v`` for the scaled monomials ``m_i`` of degree <= l.

    ``pressure_degree`` defaults to ``k-1``; larger values (up to ``k+1``) give
    the enlarged pressure spaces used by the inf-sup negative control.
    """
    el = projectors.element
    deg = el.k - 1 if pressure_degree is None else pressure_degree
    npre = n_poly(deg)
    coeffs = projectors.pdiv if deg == el.k - 1 else projectors.div_projection(deg)
    return el.basis.mass[:npre, :npre] @ coeffs


def load_moments(basis, f, degree, points=None, weights=None):
    """``int_P f_c m_a`` for ``|a| <= degree``; shape ``(2, n_poly(degree))``."""
    pts = basis.points if points is None else points
    wts = basis.weights if weights is None else weights
    vals = np.asarray(f(pts), dtype=float)
    mono = monomials(pts, basis.center, basis.h, degree)
    return np.einsum("p,pc,pa->ca", wts, vals, mono)


def local_load(projectors, f, config, quad_degree=None):
    """``f_P,j = int_P f . Pi0_kbar(phi_j)`` for the virtual basis functions ``phi_j``.

    ``f`` is generally not a polynomial, so its moments use a rule of degree
    ``2k+8`` by default rather than the element rule.
    """
    el = projectors.element
    deg = 2 * el.k + 8 if quad_degree is None else quad_degree
    pts, wts = polygon_rule(el.vertices, deg)
    mom = load_moments(projectors.basis, f, config.kbar, pts, wts)
    return np.einsum("ca,can->n", mom, projectors.p0bar)


def local_blocks(config, projectors, f, vel_dofs, pre_dofs):
    el = projectors.element
    zero = f is None
    return LocalStokesBlocks(
        element=el.index,
        stiffness=local_stiffness(projectors),
        divergence=local_divergence(projectors),
        load=np.zeros(el.n_vel) if zero else local_load(projectors, f, config),
        vel_dofs=vel_dofs, pre_dofs=pre_dofs)


def constant_fields(element):
    """DOF vectors of the constant fields (1,0) and (0,1); shape ``(n_vel, 2)``."""
    return element.dofs_of(lambda p: np.stack([np.tile([1.0, 0.0], (len(p), 1)),
                                               np.tile([0.0, 1.0], (len(p), 1))], axis=-1))


def stability_diagnostic(stiffness, element):
    """Extreme generalized eigenvalues of ``A_P`` off the constant fields.

    The reference form is the Euclidean DOF inner product scaled by
    ``trace(A_P) / n_vel``, restricted to the complement of the constants.
    Both quantities are invariant under rescaling of the element, so the
    ratio ``alpha_high / alpha_low`` is a pure shape-regularity indicator;
    ``alpha_low == 0`` flags a kernel larger than the constants.
    """
    z = null_space(constant_fields(element).T)
    a = z.T @ stiffness @ z
    scale = np.trace(stiffness) / stiffness.shape[0]
    lam = eigh(0.5 * (a + a.T), eigvals_only=True) / scale
    lam = np.where(np.abs(lam) < 1e-12 * np.abs(lam).max(), 0.0, lam)
    return float(lam.min()), float(lam.max())
