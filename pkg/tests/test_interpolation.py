"""Interpolation and projection onto the discrete spaces, plus the lifting."""

import numpy as np
import pytest

from crflow.elements import quadrature_rule
from crflow.interpolation import (CrFunction, broken_divergence,
                                  cr_at_bary, cr_cell_average, cr_gradients,
                                  interpolate_cr, interpolate_rt0,
                                  lift_cr_to_rt0, project_p0, rt0_at_bary,
                                  rt0_cell_divergence)
from crflow.mesh import build_triangulation, generate_graded_mesh

REF_TRI = build_triangulation(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
                              np.array([[0, 1, 2]]))


def _affine_vector(x):
    return np.stack([x[:, 0] + 2.0 * x[:, 1] - 0.5,
                     3.0 * x[:, 0] - x[:, 1] + 1.0], axis=1)


def _smooth_vector(x):
    return np.stack([np.sin(2.0 * x[:, 0]) * np.cosh(x[:, 1]),
                     np.exp(-x[:, 0]) + x[:, 1] ** 3], axis=1)


# --------------------------------------------------------------------------
# cellwise-constant projection
# --------------------------------------------------------------------------

def test_projection_reproduces_constants():
    tri = generate_graded_mesh(3, "power", 2.0)
    p_h = project_p0(lambda x: np.full(len(x), 4.25), tri)
    assert np.abs(p_h.values - 4.25).max() <= 1e-14


def test_projection_is_the_cell_mean():
    p_h = project_p0(lambda x: x[:, 0], REF_TRI)
    assert abs(p_h.values[0] - 1.0 / 3.0) <= 1e-15
    q_h = project_p0(lambda x: x[:, 0] ** 2, REF_TRI)
    assert abs(q_h.values[0] - 1.0 / 6.0) <= 1e-15


def test_projection_handles_vector_fields():
    tri = generate_graded_mesh(2, "uniform")
    p_h = project_p0(_affine_vector, tri)
    assert p_h.values.shape == (tri.num_cells, 2)
    want = _affine_vector(tri.centroids)
    assert np.abs(p_h.values - want).max() <= 1e-13


def test_projection_quadrature_degree_matters_for_rough_fields():
    rough = lambda x: np.cos(40.0 * x[:, 0] * x[:, 1])
    lo = project_p0(rough, REF_TRI, degree=2).values[0]
    hi = project_p0(rough, REF_TRI, degree=20).values[0]
    ref = project_p0(rough, REF_TRI, degree=18).values[0]
    assert abs(hi - ref) < abs(lo - ref)


# --------------------------------------------------------------------------
# facet-mean interpolation
# --------------------------------------------------------------------------

def test_facet_interpolation_reproduces_affine_fields():
    tri = generate_graded_mesh(3, "cosine")
    u_h = interpolate_cr(_affine_vector, tri)
    assert u_h.is_vector
    mids = 0.5 * (tri.vertices[tri.facets[:, 0]] + tri.vertices[tri.facets[:, 1]])
    want = _affine_vector(mids)
    assert np.abs(u_h.values - want.T).max() <= 1e-13
    assert np.array_equal(u_h.boundary, tri.is_boundary_facet)


def test_facet_dof_is_the_mean_not_the_midpoint_value():
    # mean of x^2 on the hypotenuse from (1,0) to (0,1) is 1/3, midpoint 1/4
    u_h = interpolate_cr(lambda x: x[:, 0] ** 2, REF_TRI)
    hyp = int(np.flatnonzero((REF_TRI.facets == [1, 2]).all(axis=1))[0])
    assert abs(u_h.values[hyp] - 1.0 / 3.0) <= 1e-14


def test_gradients_of_interpolated_affine_field():
    tri = generate_graded_mesh(4, "power", 3.0)
    u_h = interpolate_cr(_affine_vector, tri)
    grads = cr_gradients(u_h, tri)
    assert grads.shape == (tri.num_cells, 2, 2)
    assert np.abs(grads - np.array([[1.0, 2.0], [3.0, -1.0]])).max() <= 1e-12
    assert np.abs(broken_divergence(u_h, tri) - 0.0).max() <= 1e-12


def test_cell_average_of_affine_interpolant_is_centroid_value():
    tri = generate_graded_mesh(3, "uniform")
    u_h = interpolate_cr(_affine_vector, tri)
    avg = cr_cell_average(u_h, tri)
    assert np.abs(avg.values - _affine_vector(tri.centroids)).max() <= 1e-13


def test_pointwise_evaluation_layout():
    tri = generate_graded_mesh(2, "uniform")
    scalar = interpolate_cr(lambda x: x[:, 0], tri)
    bary = np.array([[1 / 3, 1 / 3, 1 / 3], [0.0, 0.5, 0.5]])
    vals = cr_at_bary(scalar, tri, bary)
    assert vals.shape == (tri.num_cells, 2)
    assert np.abs(vals[:, 0] - tri.centroids[:, 0]).max() <= 1e-14
    vec = interpolate_cr(_affine_vector, tri)
    vvals = cr_at_bary(vec, tri, bary)
    assert vvals.shape == (tri.num_cells, 2, 2)
    assert np.abs(vvals[:, 0, :] - _affine_vector(tri.centroids)).max() <= 1e-13


# --------------------------------------------------------------------------
# flux interpolation
# --------------------------------------------------------------------------

def test_flux_interpolation_of_the_identity_field():
    tri = generate_graded_mesh(3, "power", 2.0)
    v_h = interpolate_rt0(lambda x: x, tri)
    mids = 0.5 * (tri.vertices[tri.facets[:, 0]] + tri.vertices[tri.facets[:, 1]])
    want = tri.facet_lengths * np.einsum("ij,ij->i", mids, tri.facet_normals)
    assert np.abs(v_h.fluxes - want).max() <= 1e-13
    assert np.abs(rt0_cell_divergence(v_h, tri) - 2.0).max() <= 1e-11


def test_flux_interpolation_reproduces_constants():
    tri = generate_graded_mesh(3, "cosine")
    const = np.array([0.8, -0.3])
    v_h = interpolate_rt0(lambda x: np.broadcast_to(const, (len(x), 2)), tri)
    bary = quadrature_rule(2).points
    vals = rt0_at_bary(v_h, tri, bary)
    assert np.abs(vals - const).max() <= 1e-12
    assert np.abs(rt0_cell_divergence(v_h, tri)).max() <= 1e-11


def test_flux_divergence_commutes_with_cell_projection():
    # div of the flux interpolant equals the cell mean of the divergence
    tri = generate_graded_mesh(4, "power", 2.0)
    field = lambda x: np.stack([x[:, 0] ** 2, x[:, 0] * x[:, 1]], axis=1)
    v_h = interpolate_rt0(field, tri)
    means = project_p0(lambda x: 3.0 * x[:, 0], tri, degree=4)
    assert np.abs(rt0_cell_divergence(v_h, tri) - means.values).max() <= 1e-10


def test_flux_interpolation_rejects_scalars():
    with pytest.raises(ValueError, match="flux interpolation needs a vector field"):
        interpolate_rt0(lambda x: x[:, 0], REF_TRI)


# --------------------------------------------------------------------------
# the lifting into normal-flux-continuous fields
# --------------------------------------------------------------------------

def test_lift_matches_flux_interpolation_on_affine_fields():
    tri = generate_graded_mesh(3, "power", 2.0)
    u_h = interpolate_cr(_affine_vector, tri)
    lifted = lift_cr_to_rt0(u_h, tri)
    direct = interpolate_rt0(_affine_vector, tri)
    scale = np.abs(direct.fluxes).max()
    assert np.abs(lifted.fluxes - direct.fluxes).max() <= 1e-13 * scale


def test_lift_preserves_constants_pointwise():
    tri = generate_graded_mesh(2, "cosine")
    const = np.array([1.5, 2.5])
    u_h = interpolate_cr(lambda x: np.broadcast_to(const, (len(x), 2)), tri)
    lifted = lift_cr_to_rt0(u_h, tri)
    vals = rt0_at_bary(lifted, tri, quadrature_rule(3).points)
    assert np.abs(vals - const).max() <= 1e-12


def test_lift_commutes_with_divergence_on_smooth_fields():
    tri = generate_graded_mesh(4, "cosine")
    u_h = interpolate_cr(_smooth_vector, tri)
    lhs = rt0_cell_divergence(lift_cr_to_rt0(u_h, tri), tri)
    rhs = broken_divergence(u_h, tri)
    assert np.abs(lhs - rhs).max() <= 1e-11


def test_lifted_field_has_continuous_normal_trace():
    # the defining property of the lifted space: v·n is single-valued on
    # every interior facet (and equals flux/length there)
    tri = generate_graded_mesh(3, "power", 2.0)
    u_h = interpolate_cr(_smooth_vector, tri)
    lifted = lift_cr_to_rt0(u_h, tri)
    scale = np.abs(lifted.fluxes / tri.facet_lengths).max()
    for f in np.flatnonzero(~tri.is_boundary_facet):
        want = lifted.fluxes[f] / tri.facet_lengths[f]
        for c in tri.facet_cells[f]:
            k = int(np.flatnonzero(tri.cell_facets[c] == f)[0])
            bary = np.full(3, 0.5)
            bary[k] = 0.0
            value = rt0_at_bary(lifted, tri, bary[None, :])[c, 0]
            assert abs(value @ tri.facet_normals[f] - want) <= 1e-12 * scale


def test_lift_rejects_scalar_functions():
    scalar = interpolate_cr(lambda x: x[:, 1], REF_TRI)
    with pytest.raises(ValueError, match="lifting needs a vector function"):
        lift_cr_to_rt0(scalar, REF_TRI)


# --------------------------------------------------------------------------
# anisotropic robustness
# --------------------------------------------------------------------------

def _interp_errors_on_flat_cells():
    """Normalized interpolation errors on cells of fixed width, shrinking
    height: bounded behavior is what the maximum-angle condition buys."""
    rule = quadrature_rule(10)
    errors = []
    for delta in (0.5, 0.1, 0.01, 0.001):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, delta]])
        tri = build_triangulation(verts, np.array([[0, 1, 2]]))
        u_h = interpolate_cr(_smooth_vector, tri)
        pts = rule.points @ verts
        exact = _smooth_vector(pts)
        approx = cr_at_bary(u_h, tri, rule.points)[0]
        err2 = float(rule.weights @ ((approx - exact) ** 2).sum(axis=1))
        exact2 = float(rule.weights @ (exact ** 2).sum(axis=1))
        errors.append(np.sqrt(err2 / exact2))
    return errors


def test_interpolation_does_not_degrade_with_aspect_ratio():
    errors = _interp_errors_on_flat_cells()
    assert max(errors) <= 3.0 * min(errors)
    assert max(errors) < 0.2


def test_interpolation_error_decays_under_anisotropic_refinement():
    # halving both axes of a graded corner cell: error drops near h^2 in
    # the relative L2 measure on CR interpolants of smooth fields
    rule = quadrature_rule(10)
    errs = []
    for s in (0.2, 0.1, 0.05):
        verts = np.array([[0.0, 0.0], [s, 0.0], [0.0, s ** 2]])
        tri = build_triangulation(verts, np.array([[0, 1, 2]]))
        u_h = interpolate_cr(_smooth_vector, tri)
        pts = rule.points @ verts
        diff = cr_at_bary(u_h, tri, rule.points)[0] - _smooth_vector(pts)
        errs.append(np.sqrt(float(rule.weights @ (diff ** 2).sum(axis=1))))
    assert errs[1] / errs[0] <= 2.0 ** -1.6
    assert errs[2] / errs[1] <= 2.0 ** -1.6
