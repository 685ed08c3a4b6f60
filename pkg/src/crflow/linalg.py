"""Sparse solver stack: CSR kernels, ILU(0), restarted GMRES.

The factorization keeps the input sparsity pattern (no fill), so every row
must contain its diagonal position; saddle-point callers insert explicit
zeros on the pressure diagonal for that reason.  GMRES is restarted,
right-preconditioned, and orthogonalizes with modified Gram-Schmidt; the
residual tracked by the Givens recurrence equals the true residual of the
unpreconditioned system, which the stopping rule uses.
"""

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread, mmwrite
from dataclasses import dataclass, field
from numba import njit


def spmv(A, x):
    """Sparse matrix-vector product with shape validation."""
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


@njit(cache=True)
def _ilu0_factor(n, indptr, indices, data, diag_pos):
    pos = np.full(n, -1, np.int64)
    for i in range(n):
        r0, r1 = indptr[i], indptr[i + 1]
        for idx in range(r0, r1):
            pos[indices[idx]] = idx
        idx = r0
        while idx < r1 and indices[idx] < i:
            k = indices[idx]
            dk = data[diag_pos[k]]
            f = data[idx] / dk
            data[idx] = f
            for jdx in range(diag_pos[k] + 1, indptr[k + 1]):
                p = pos[indices[jdx]]
                if p >= 0:
                    data[p] -= f * data[jdx]
            idx += 1
        for idx in range(r0, r1):
            pos[indices[idx]] = -1
        if abs(data[diag_pos[i]]) < 1e-300:
            return i
    return -1


@njit(cache=True)
def _ilu0_solve(n, indptr, indices, data, diag_pos, b, out):
    for i in range(n):
        s = b[i]
        for idx in range(indptr[i], diag_pos[i]):
            s -= data[idx] * out[indices[idx]]
        out[i] = s
    for i in range(n - 1, -1, -1):
        s = out[i]
        for idx in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= data[idx] * out[indices[idx]]
        out[i] = s / data[diag_pos[i]]


@dataclass
class Ilu0Factors:
    """Unit-lower/upper factors stored in-place on the input pattern."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    diag_pos: np.ndarray

    def solve(self, b):
        out = np.empty_like(b)
        _ilu0_solve(self.n, self.indptr, self.indices, self.data,
                    self.diag_pos, np.ascontiguousarray(b, dtype=float), out)
        return out

    @property
    def L(self):
        m = sp.csr_matrix((self.data.copy(), self.indices, self.indptr),
                          shape=(self.n, self.n)).tolil()
        out = sp.tril(m, k=-1).tolil()
        out.setdiag(1.0)
        return out.tocsr()

    @property
    def U(self):
        m = sp.csr_matrix((self.data.copy(), self.indices, self.indptr),
                          shape=(self.n, self.n))
        return sp.triu(m, k=0).tocsr()


def ilu0_factorize(A):
    """ILU(0) on a square CSR matrix.

    Raises on a missing diagonal position or a (near-)zero pivot, naming
    the offending row; the saddle-point pressure rows rely on elimination
    filling their explicitly stored zero diagonal.
    """
    A = A.tocsr()
    if A.shape[0] != A.shape[1]:
        raise ValueError("ILU(0) needs a square matrix")
    n = A.shape[0]
    A.sort_indices()
    indptr = A.indptr.astype(np.int64)
    indices = A.indices.astype(np.int64)
    data = A.data.astype(float).copy()

    diag_pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        j = np.searchsorted(indices[lo:hi], i) + lo
        if j >= hi or indices[j] != i:
            raise ValueError(f"row {i} has no stored diagonal entry")
        diag_pos[i] = j

    bad = _ilu0_factor(n, indptr, indices, data, diag_pos)
    if bad >= 0:
        raise ZeroDivisionError(f"ILU(0) zero pivot at row {bad}")
    return Ilu0Factors(n=n, indptr=indptr, indices=indices, data=data,
                       diag_pos=diag_pos)


@dataclass
class GmresReport:
    """Iteration record of one gmres call."""

    iterations: int
    restarts: int
    relative_residual: float
    converged: bool
    residuals: list = field(default_factory=list)
    basis_orthogonality: float = None


def gmres(A, b, M=None, x0=None, restart=500, rtol=1e-12, maxiter=None,
          check_orthogonality=False):
    """Right-preconditioned restarted GMRES.

    Parameters
    ----------
    A : sparse matrix (or object supporting @)
    b : ndarray
    M : preconditioner with a solve(v) method, or None
    x0 : ndarray, optional
        Initial guess.
    restart : int
        Arnoldi cycle length.
    rtol : float
        Convergence on ||b - Ax|| / ||b||.
    maxiter : int, optional
        Total inner iterations across cycles (default 4 * restart).

    Returns
    -------
    (x, GmresReport)
    """
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: {A.shape} vs rhs {n}")
    if maxiter is None:
        maxiter = 4 * restart
    msolve = M.solve if M is not None else (lambda v: v)
    normb = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    report = GmresReport(0, 0, 0.0, False)
    if normb == 0.0:
        report.converged = True
        return np.zeros(n), report

    ortho = 0.0
    cycles = 0
    while True:
        r = b - A @ x
        beta = np.linalg.norm(r)
        relres = beta / normb
        report.residuals.append(relres)
        if relres <= rtol or report.iterations >= maxiter:
            report.relative_residual = relres
            report.converged = relres <= rtol
            report.restarts = max(cycles - 1, 0)
            if check_orthogonality:
                report.basis_orthogonality = ortho
            return x, report
        cycles += 1

        V = [r / beta]
        H = np.zeros((restart + 1, restart))
        cs = np.zeros(restart)
        sn = np.zeros(restart)
        g = np.zeros(restart + 1)
        g[0] = beta
        m = 0
        for j in range(restart):
            report.iterations += 1
            w = A @ msolve(V[j])
            wnorm = np.linalg.norm(w)
            for i in range(j + 1):            # modified Gram-Schmidt
                hij = np.dot(V[i], w)
                H[i, j] = hij
                w -= hij * V[i]
            hlast = np.linalg.norm(w)
            if hlast < 0.7071 * wnorm:        # cancellation: one more MGS pass
                for i in range(j + 1):
                    corr = np.dot(V[i], w)
                    H[i, j] += corr
                    w -= corr * V[i]
                hlast = np.linalg.norm(w)
            H[j + 1, j] = hlast
            breakdown = hlast <= 1e-300
            if not breakdown:
                V.append(w / hlast)
            # apply accumulated rotations, then a new one
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            m = j + 1
            relres = abs(g[j + 1]) / normb
            report.residuals.append(relres)
            if relres <= rtol or breakdown or report.iterations >= maxiter:
                break
        y = np.zeros(m)
        for i in range(m - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1:m] @ y[i + 1:m]) / H[i, i]
        x = x + msolve(np.stack(V[:m], axis=1) @ y)
        if check_orthogonality:
            Vm = np.stack(V, axis=1)
            ortho = max(ortho, np.abs(Vm.T @ Vm - np.eye(Vm.shape[1])).max())


def save_matrix(path, A):
    """Write a sparse matrix in Matrix Market format."""
    mmwrite(path, sp.coo_matrix(A))


def load_matrix(path):
    """Read a Matrix Market file as CSR."""
    m = mmread(path).tocsr()
    m.sort_indices()
    return m
