"""Sparse kernels: products, incomplete factorization, restarted solver."""

import numpy as np
import pytest
import scipy.sparse as sp

from crflow.assembly import (SaddleSystem, apply_dirichlet,
                             assemble_divergence, assemble_laplacian,
                             assemble_load_lifted, build_dofmap)
from crflow.interpolation import CrFunction
from crflow.linalg import (gmres, ilu0_factorize, load_matrix, save_matrix,
                           spmv)
from crflow.mesh import generate_graded_mesh


# --------------------------------------------------------------------------
# sparse product
# --------------------------------------------------------------------------

def test_spmv_identity_and_small_cases():
    eye = sp.identity(4, format="csr")
    x = np.array([1.0, -2.0, 3.0, 0.5])
    assert np.array_equal(spmv(eye, x), x)
    a_mat = sp.csr_matrix(np.array([[2.0, 1.0], [0.0, 3.0]]))
    assert np.array_equal(spmv(a_mat, np.ones(2)), [3.0, 3.0])


def test_spmv_matches_dense_oracle():
    rng = np.random.default_rng(0)
    dense = rng.normal(size=(50, 50)) * (rng.uniform(size=(50, 50)) < 0.1)
    a_mat = sp.csr_matrix(dense)
    x = rng.normal(size=50)
    assert np.abs(spmv(a_mat, x) - dense @ x).max() <= 1e-13


def test_spmv_rejects_mismatched_shapes():
    a_mat = sp.identity(3, format="csr")
    with pytest.raises(ValueError, match="dimension mismatch"):
        spmv(a_mat, np.ones(4))


# --------------------------------------------------------------------------
# incomplete factorization
# --------------------------------------------------------------------------

def test_ilu0_of_a_diagonal_matrix():
    a_mat = sp.diags([2.0, 5.0, -3.0]).tocsr()
    fac = ilu0_factorize(a_mat)
    assert np.array_equal(fac.L.toarray(), np.eye(3))
    assert np.array_equal(fac.U.toarray(), a_mat.toarray())
    b = np.array([4.0, 10.0, 9.0])
    assert np.abs(fac.solve(b) - b / np.array([2.0, 5.0, -3.0])).max() <= 1e-15


def test_ilu0_is_exact_on_tridiagonal_systems():
    # no fill is created, so the incomplete factorization is the LU
    n = 12
    a_mat = sp.diags([-np.ones(n - 1), 4.0 * np.ones(n), -np.ones(n - 1)],
                     offsets=[-1, 0, 1]).tocsr()
    fac = ilu0_factorize(a_mat)
    assert np.abs((fac.L @ fac.U - a_mat).toarray()).max() <= 1e-13
    rng = np.random.default_rng(1)
    b = rng.normal(size=n)
    assert np.abs(a_mat @ fac.solve(b) - b).max() <= 1e-12


def test_ilu0_defect_lives_outside_the_pattern():
    dense = np.array([
        [4.0, 1.0, 0.0, 0.0, 1.0],
        [1.0, 4.0, 1.0, 0.0, 0.0],
        [0.0, 1.0, 4.0, 1.0, 0.0],
        [0.0, 0.0, 1.0, 4.0, 1.0],
        [1.0, 0.0, 0.0, 1.0, 4.0],
    ])
    a_mat = sp.csr_matrix(dense)
    fac = ilu0_factorize(a_mat)
    defect = (fac.L @ fac.U - a_mat).toarray()
    pattern = dense != 0.0
    assert np.abs(defect[pattern]).max() <= 1e-13
    assert np.abs(defect[~pattern]).max() > 1e-3  # fill was genuinely dropped


def test_ilu0_rejects_rectangular_matrices():
    with pytest.raises(ValueError, match="needs a square matrix"):
        ilu0_factorize(sp.csr_matrix(np.ones((3, 4))))


def test_ilu0_requires_stored_diagonals():
    dense = np.array([[1.0, 2.0], [3.0, 0.0]])
    a_mat = sp.csr_matrix(dense)  # (1,1) not stored
    with pytest.raises(ValueError, match="row 1 has no stored diagonal entry"):
        ilu0_factorize(a_mat)


def test_ilu0_flags_zero_pivots():
    dense = np.array([[1.0, 1.0], [1.0, 1.0]])
    a_mat = sp.csr_matrix(dense)
    a_mat.setdiag([1.0, 1.0])
    dense[1, 1] = 1.0  # elimination produces u22 = 1 - 1*1 = 0
    with pytest.raises(ZeroDivisionError, match="zero pivot at row 1"):
        ilu0_factorize(a_mat)


# --------------------------------------------------------------------------
# restarted iterative solver
# --------------------------------------------------------------------------

def test_identity_converges_immediately():
    b = np.array([1.0, 2.0, 3.0])
    x, report = gmres(sp.identity(3, format="csr"), b)
    assert report.converged and report.iterations == 1
    assert np.abs(x - b).max() <= 1e-14


def test_small_spd_system_matches_dense_inverse():
    dense = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, 1.0], [0.0, 1.0, 5.0]])
    b = np.array([1.0, -2.0, 0.5])
    x, report = gmres(sp.csr_matrix(dense), b, rtol=1e-14)
    assert report.converged
    assert np.abs(x - np.linalg.solve(dense, b)).max() <= 1e-10


def test_krylov_exactness_without_preconditioning():
    rng = np.random.default_rng(5)
    n = 40
    dense = np.eye(n) * 4.0 + 0.3 * rng.normal(size=(n, n))
    b = rng.normal(size=n)
    x, report = gmres(sp.csr_matrix(dense), b, restart=500, rtol=1e-13)
    assert report.converged
    assert report.iterations <= n
    assert np.linalg.norm(b - dense @ x) <= 1e-12 * np.linalg.norm(b)


def test_zero_rhs_returns_zero():
    x, report = gmres(sp.identity(5, format="csr"), np.zeros(5))
    assert report.converged
    assert np.abs(x).max() == 0.0


def test_reported_residual_is_the_true_residual_on_a_saddle_system():
    tri = generate_graded_mesh(4, "uniform")
    dm = build_dofmap(tri)
    a_mat = assemble_laplacian(tri, dm).tocsr()
    b_mat = assemble_divergence(tri, dm)
    rhs_u = assemble_load_lifted(
        tri, dm, lambda x: np.stack([np.sin(3 * x[:, 1]), x[:, 0]], axis=1))
    system = SaddleSystem(A=a_mat, B=b_mat, N=None, rhs_u=rhs_u,
                          rhs_p=np.zeros(dm.n_pressure))
    zero = CrFunction(np.zeros((2, tri.num_facets)),
                      tri.is_boundary_facet.copy())
    reduced, _ = apply_dirichlet(system, zero, dm)
    n_int = reduced.A.shape[0]
    b_red = reduced.B[1:].tocoo()
    a_coo = reduced.A.tocoo()
    n_tot = n_int + b_red.shape[0]
    rows = np.concatenate([a_coo.row, b_red.row + n_int, b_red.col,
                           np.arange(n_int, n_tot)])
    cols = np.concatenate([a_coo.col, b_red.col, b_red.row + n_int,
                           np.arange(n_int, n_tot)])
    vals = np.concatenate([a_coo.data, b_red.data, b_red.data,
                           np.zeros(b_red.shape[0])])
    mono = sp.coo_matrix((vals, (rows, cols)), shape=(n_tot, n_tot)).tocsr()
    mono.sort_indices()
    rhs = np.concatenate([reduced.rhs_u, np.zeros(n_tot - n_int)])
    fac = ilu0_factorize(mono)
    x, report = gmres(mono, rhs, M=fac, rtol=1e-12)
    assert report.converged
    true_rel = np.linalg.norm(rhs - mono @ x) / np.linalg.norm(rhs)
    assert true_rel <= 1e-12
    assert abs(report.relative_residual - true_rel) <= 1e-13


def test_preconditioning_changes_iterations_not_the_solution():
    rng = np.random.default_rng(7)
    n = 30
    dense = np.diag(np.linspace(1.0, 500.0, n)) + rng.normal(size=(n, n))
    a_mat = sp.csr_matrix(dense)
    b = rng.normal(size=n)
    fac = ilu0_factorize(a_mat)
    x_pre, rep_pre = gmres(a_mat, b, M=fac, rtol=1e-13)
    x_raw, rep_raw = gmres(a_mat, b, rtol=1e-13)
    assert rep_pre.converged and rep_raw.converged
    assert rep_pre.iterations <= rep_raw.iterations
    assert np.abs(x_pre - x_raw).max() <= 1e-9 * np.abs(x_raw).max()


def test_right_preconditioned_solve_equals_solving_the_composed_operator():
    rng = np.random.default_rng(8)
    n = 25
    dense = np.eye(n) * 3.0 + 0.4 * rng.normal(size=(n, n))
    a_mat = sp.csr_matrix(dense)
    b = rng.normal(size=n)
    fac = ilu0_factorize(a_mat)
    x, _ = gmres(a_mat, b, M=fac, rtol=1e-13)
    minv = np.column_stack([fac.solve(col) for col in np.eye(n)])
    y, _ = gmres(sp.csr_matrix(dense @ minv), b, rtol=1e-13)
    assert np.abs(x - minv @ y).max() <= 1e-10 * np.abs(x).max()


def test_residual_history_is_monotone_within_a_cycle():
    rng = np.random.default_rng(9)
    n = 60
    dense = np.eye(n) * 5.0 + 0.5 * rng.normal(size=(n, n))
    b = rng.normal(size=n)
    _, report = gmres(sp.csr_matrix(dense), b, restart=500, rtol=1e-13)
    res = np.array(report.residuals)
    assert report.restarts == 0
    assert np.all(np.diff(res) <= 1e-14)


def test_orthogonality_check_reports_a_tight_basis():
    rng = np.random.default_rng(10)
    n = 40
    dense = np.eye(n) * 4.0 + 0.3 * rng.normal(size=(n, n))
    b = rng.normal(size=n)
    _, report = gmres(sp.csr_matrix(dense), b, rtol=1e-13,
                      check_orthogonality=True)
    assert report.basis_orthogonality is not None
    assert report.basis_orthogonality <= 1e-10


def test_exhausted_iterations_reports_failure():
    rng = np.random.default_rng(11)
    n = 50
    dense = np.eye(n) + 0.9 * rng.normal(size=(n, n))
    b = rng.normal(size=n)
    _, report = gmres(sp.csr_matrix(dense), b, restart=5, maxiter=6,
                      rtol=1e-15)
    assert not report.converged
    assert report.iterations == 6


# --------------------------------------------------------------------------
# matrix exchange format
# --------------------------------------------------------------------------

def test_matrix_roundtrip(tmp_path):
    rng = np.random.default_rng(12)
    dense = rng.normal(size=(9, 9)) * (rng.uniform(size=(9, 9)) < 0.3)
    a_mat = sp.csr_matrix(dense)
    path = tmp_path / "matrix.mtx"
    save_matrix(path, a_mat)
    back = load_matrix(path)
    assert np.abs((back - a_mat).toarray()).max() <= 1e-15
