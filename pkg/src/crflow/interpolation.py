"""Interpolation operators and discrete function containers.

Three discrete spaces appear: cellwise constants (pressure), the
facet-mean nonconforming space (velocity components), and the lowest-order
normal-flux space (lifted velocities).  Smooth inputs are callbacks mapping
an (n, 2) point array to (n,) scalars or (n, 2) vectors; discrete inputs
are the containers below.  All degree-of-freedom functionals are facet
integrals evaluated with Gauss rules from the elements module.
"""

import numpy as np
from dataclasses import dataclass

from .elements import quadrature_rule, edge_quadrature


@dataclass
class P0Function:
    """Cellwise constants; values has shape (nc,) or (nc, 2)."""

    values: np.ndarray


@dataclass
class CrFunction:
    """Facet-mean DOFs: (nf,) for scalars, (2, nf) for vector fields.

    The component-major vector layout matches the velocity DOF numbering
    used in assembly (x-block then y-block).  `boundary` flags the facets
    on the domain boundary.
    """

    values: np.ndarray
    boundary: np.ndarray = None

    @property
    def is_vector(self):
        return self.values.ndim == 2


@dataclass
class Rt0Function:
    """Signed normal fluxes through facets, relative to the stored n_F."""

    fluxes: np.ndarray


def _facet_points(tri, t):
    """Edge quadrature points on every facet, shape (nf, len(t), 2)."""
    a = tri.vertices[tri.facets[:, 0]]
    b = tri.vertices[tri.facets[:, 1]]
    return a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]


def _eval_field(v, points):
    flat = points.reshape(-1, 2)
    out = np.asarray(v(flat), dtype=float)
    if out.ndim == 1:
        return out.reshape(points.shape[:-1])
    return out.reshape(points.shape[:-1] + (2,))


def project_p0(f, tri, degree=6):
    """Cell means (1/|T|) int_T f of a scalar or vector callback."""
    rule = quadrature_rule(degree)
    pts = np.einsum("ql,clx->cqx", rule.points, tri.vertices[tri.cells])
    vals = _eval_field(f, pts)
    if vals.ndim == 2:
        return P0Function(vals @ rule.weights)
    return P0Function(np.einsum("cqx,q->cx", vals, rule.weights))


def interpolate_cr(v, tri, npoints=8):
    """Facet-mean interpolant of a scalar or vector field."""
    t, w = edge_quadrature(npoints)
    vals = _eval_field(v, _facet_points(tri, t))
    if vals.ndim == 2:
        dofs = vals @ w
    else:
        dofs = np.einsum("fqc,q->cf", vals, w)
    return CrFunction(dofs, boundary=tri.is_boundary_facet.copy())

def interpolate_rt0(v, tri, npoints=8):
    """Normal-flux interpolant: DOF_F = int_F v . n_F ds."""
    t, w = edge_quadrature(npoints)
    vals = _eval_field(v, _facet_points(tri, t))
    if vals.ndim != 3:
        raise ValueError("flux interpolation needs a vector field")
    fluxes = tri.facet_lengths * np.einsum("fqc,fc,q->f", vals, tri.facet_normals, w)
    return Rt0Function(fluxes)


def lift_cr_to_rt0(v_h, tri):
    """Flux projection of a vector facet-mean function.

    The facet DOF of the lift is |F| times the facet-mean vector dotted
    with n_F; the facet mean is single-valued between the two incident
    cells, so the flux is well defined (computed once, owner side).
    """
    if not v_h.is_vector:
        raise ValueError("lifting needs a vector function")
    vx, vy = v_h.values
    fluxes = tri.facet_lengths * (vx * tri.facet_normals[:, 0] +
                                  vy * tri.facet_normals[:, 1])
    return Rt0Function(fluxes)


def cr_at_bary(u_h, tri, bary):
    """Evaluate a CrFunction at barycentric points, per cell.

    Returns (nc, nq) for scalars or (nc, nq, 2) for vectors.
    """
    theta = 1.0 - 2.0 * bary                      # (nq, 3)
    if u_h.is_vector:
        local = u_h.values[:, tri.cell_facets]    # (2, nc, 3)
        return np.einsum("qi,kci->cqk", theta, local)
    local = u_h.values[tri.cell_facets]           # (nc, 3)
    return local @ theta.T


def cr_gradients(u_h, tri):
    """Piecewise-constant gradients: (nc, 2) scalar or (nc, 2, 2) vector.

    Vector output indexes [cell, component, derivative direction].
    """
    gtheta = -2.0 * tri.grad_bary                 # (nc, 3, 2)
    if u_h.is_vector:
        local = u_h.values[:, tri.cell_facets]    # (2, nc, 3)
        return np.einsum("kci,cid->ckd", local, gtheta)
    local = u_h.values[tri.cell_facets]
    return np.einsum("ci,cid->cd", local, gtheta)


def broken_divergence(u_h, tri):
    """Cellwise divergence of a vector CrFunction (constant per cell)."""
    g = cr_gradients(u_h, tri)
    return g[:, 0, 0] + g[:, 1, 1]


def cr_cell_average(u_h, tri):
    """Cell averages (exact for piecewise-linear functions)."""
    if u_h.is_vector:
        return P0Function(u_h.values[:, tri.cell_facets].mean(axis=2).T)
    return P0Function(u_h.values[tri.cell_facets].mean(axis=1))


def rt0_at_bary(v_h, tri, bary):
    """Evaluate an Rt0Function at barycentric points: (nc, nq, 2)."""
    pts = np.einsum("ql,clx->cqx", bary, tri.vertices[tri.cells])
    coef = (v_h.fluxes[tri.cell_facets] * tri.facet_signs /
            (2.0 * tri.areas)[:, None])           # (nc, 3)
    anchors = tri.vertices[tri.cells]             # (nc, 3, 2)
    diff = pts[:, :, None, :] - anchors[:, None, :, :]
    return np.einsum("ci,cqix->cqx", coef, diff)


def rt0_cell_divergence(v_h, tri):
    """Constant per-cell divergence of an Rt0Function."""
    signed = v_h.fluxes[tri.cell_facets] * tri.facet_signs
    return signed.sum(axis=1) / tri.areas
