"""Assembly of the discrete saddle-point operators.

Velocity DOFs are facet means, numbered component-major (all x-components,
then all y-components); pressure DOFs are cell constants.  The viscous
block is the broken componentwise stiffness matrix, the divergence block
integrates -div v against cell constants, and the convection block is the
linearized rotational trilinear form in which trial and test velocities
enter through their normal-flux lifting.  On each cell the lifted basis
function of facet-DOF (i, c) is -(grad lambda_i)_c (x - p_i), which is what
makes the load vector see only the divergence-free part of the forcing.
"""

import numpy as np
import scipy.sparse as sp
from dataclasses import dataclass

from .elements import quadrature_rule


@dataclass
class DofMap:
    """Velocity/pressure DOF numbering for one mesh."""

    n_facets: int
    n_cells: int
    boundary_vdofs: np.ndarray
    interior_vdofs: np.ndarray

    @property
    def n_velocity(self):
        return 2 * self.n_facets

    @property
    def n_pressure(self):
        return self.n_cells

    @property
    def total(self):
        return self.n_velocity + self.n_pressure

    def vdof(self, component, facet):
        return component * self.n_facets + facet


def build_dofmap(tri):
    bf = np.nonzero(tri.is_boundary_facet)[0]
    nf = tri.num_facets
    boundary = np.concatenate([bf, bf + nf])
    mask = np.zeros(2 * nf, dtype=bool)
    mask[boundary] = True
    return DofMap(n_facets=nf, n_cells=tri.num_cells,
                  boundary_vdofs=boundary,
                  interior_vdofs=np.nonzero(~mask)[0])


@dataclass
class SaddleSystem:
    """One linearized iteration's blocks and right-hand sides.

    A is the (possibly viscosity-scaled, possibly combined) momentum block,
    B the divergence block, N the skew convection block when kept separate.
    """

    A: sp.csr_matrix
    B: sp.csr_matrix
    N: sp.csr_matrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray


def _scatter_css(rows, cols, vals, shape):
    m = sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()
    m.sort_indices()
    return m


def assemble_laplacian(tri, dofmap):
    """Broken stiffness matrix of the componentwise gradients.

    Entry ((i,c),(j,c)) = sum_T |T| grad theta_i . grad theta_j, identical
    for both components; cross-component blocks are zero.
    """
    gtheta = -2.0 * tri.grad_bary                              # (nc, 3, 2)
    local = np.einsum("c,cid,cjd->cij", tri.areas, gtheta, gtheta)
    cf = tri.cell_facets
    rows = np.broadcast_to(cf[:, :, None], local.shape)
    cols = np.broadcast_to(cf[:, None, :], local.shape)
    nf = dofmap.n_facets
    n = dofmap.n_velocity
    r = np.concatenate([rows.ravel(), rows.ravel() + nf])
    c = np.concatenate([cols.ravel(), cols.ravel() + nf])
    v = np.concatenate([local.ravel(), local.ravel()])
    return _scatter_css(r, c, v, (n, n))


def assemble_divergence(tri, dofmap):
    """Constraint block: entry (T, (i,c)) = -int_T div phi_{(i,c)} dx."""
    gtheta = -2.0 * tri.grad_bary
    vals = -tri.areas[:, None, None] * gtheta                  # (nc, 3, 2)
    cells = np.broadcast_to(np.arange(tri.num_cells)[:, None], (tri.num_cells, 3))
    nf = dofmap.n_facets
    rows = np.concatenate([cells.ravel(), cells.ravel()])
    cols = np.concatenate([tri.cell_facets.ravel(), tri.cell_facets.ravel() + nf])
    v = np.concatenate([vals[:, :, 0].ravel(), vals[:, :, 1].ravel()])
    return _scatter_css(rows, cols, v, (dofmap.n_pressure, dofmap.n_velocity))


def _lifted_basis_at(tri, bary):
    """Lifted velocity basis values at quadrature points.

    Returns (pts, V) with pts (nc, nq, 2) and V (nc, nq, 6, 2): local basis
    b = 3*c + i is the lift of the facet-i DOF of component c, equal to
    -(grad lambda_i)_c (x - p_i) on the cell.
    """
    pts = np.einsum("ql,clx->cqx", bary, tri.vertices[tri.cells])
    diff = pts[:, :, None, :] - tri.vertices[tri.cells][:, None, :, :]   # (nc,nq,3,2)
    V = np.empty(pts.shape[:2] + (6, 2))
    for comp in range(2):
        coef = -tri.grad_bary[:, :, comp]                                # (nc, 3)
        V[:, :, 3 * comp:3 * comp + 3, :] = coef[:, None, :, None] * diff
    return pts, V


def _local_vdofs(tri, dofmap):
    """Column ids matching _lifted_basis_at's local ordering, (nc, 6)."""
    cf = tri.cell_facets
    return np.concatenate([cf, cf + dofmap.n_facets], axis=1)


def assemble_convection(tri, dofmap, u_prev, degree=4):
    """Skew linearized convection block at the state u_prev.

    Entry (a, b) = sum_T int_T {(Lphi_b . grad)u_prev . Lphi_a
                              - (Lphi_a . grad)u_prev . Lphi_b} dx
    with L the flux lifting.  The local matrix is formed as E - E^T, so the
    assembled block is skew-symmetric to the last bit.
    """
    if not u_prev.is_vector:
        raise ValueError("linearization state must be a vector function")
    rule = quadrature_rule(degree)
    _, V = _lifted_basis_at(tri, rule.points)
    gtheta = -2.0 * tri.grad_bary
    local_state = u_prev.values[:, tri.cell_facets]            # (2, nc, 3)
    G = np.einsum("kci,cid->ckd", local_state, gtheta)         # (nc, 2, 2)
    W = rule.weights[None, :] * tri.areas[:, None]
    GV = np.einsum("crd,cqbd->cqbr", G, V)
    E = np.einsum("cq,cqar,cqbr->cab", W, V, GV)
    local = E - np.transpose(E, (0, 2, 1))
    dofs = _local_vdofs(tri, dofmap)
    rows = np.broadcast_to(dofs[:, :, None], local.shape)
    cols = np.broadcast_to(dofs[:, None, :], local.shape)
    n = dofmap.n_velocity
    return _scatter_css(rows, cols, local, (n, n))


def assemble_load_lifted(tri, dofmap, f, quad_degree=14):
    """Load vector int f . (lifted basis) dx.

    Only two moments of f per cell are needed since the lifted basis is
    -(grad lambda_i)_c (x - p_i): the cell integrals of f and of f . x.
    """
    rule = quadrature_rule(quad_degree)
    pts = np.einsum("ql,clx->cqx", rule.points, tri.vertices[tri.cells])
    fv = np.asarray(f(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape)
    W = rule.weights[None, :] * tri.areas[:, None]
    s0 = np.einsum("cq,cqx->cx", W, fv)                        # int f
    s1 = np.einsum("cq,cqx,cqx->c", W, fv, pts)                # int f.x
    m = s1[:, None] - np.einsum("clx,cx->cl", tri.vertices[tri.cells], s0)
    vals = -tri.grad_bary * m[:, :, None]                      # (nc, 3, 2)
    nf = dofmap.n_facets
    cols = np.concatenate([tri.cell_facets.ravel(), tri.cell_facets.ravel() + nf])
    v = np.concatenate([vals[:, :, 0].ravel(), vals[:, :, 1].ravel()])
    return np.bincount(cols, weights=v, minlength=dofmap.n_velocity)


def apply_dirichlet(system, g_h, dofmap):
    """Eliminate boundary velocity DOFs against prescribed facet means.

    g_h is a vector CrFunction whose boundary entries hold the data (other
    entries ignored).  Rows and columns of every present block are removed
    and the known boundary values moved to the right-hand sides.  Returns
    the reduced system together with the full-length boundary-value vector
    used for the elimination.
    """
    if g_h.values.shape != (2, dofmap.n_facets):
        raise ValueError("boundary data must be a vector facet function")
    keep = dofmap.interior_vdofs
    bnd = dofmap.boundary_vdofs
    ub = np.zeros(dofmap.n_velocity)
    ub[bnd] = g_h.values.ravel()[bnd]

    def reduce_square(M):
        if M is None:
            return None, 0.0
        lift = M[:, bnd] @ ub[bnd]
        return M[keep][:, keep].tocsr(), lift[keep]

    A_red, lift_a = reduce_square(system.A)
    N_red, lift_n = reduce_square(system.N)
    rhs_u = system.rhs_u[keep] - lift_a - lift_n
    B_red = system.B[:, keep].tocsr()
    rhs_p = system.rhs_p - system.B[:, bnd] @ ub[bnd]
    reduced = SaddleSystem(A=A_red, B=B_red, N=N_red, rhs_u=rhs_u, rhs_p=rhs_p)
    return reduced, ub
