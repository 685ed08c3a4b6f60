"""Fixed-point solution of the discrete stationary flow problem.

Each iteration freezes the convecting field, assembles the skew convection
block at the frozen state, and solves the resulting saddle-point system
with one pressure DOF pinned to keep it nonsingular (the true gauge, zero
area-weighted mean, is restored afterwards).  Boundary velocity DOFs carry
the facet means of the prescribed trace and are eliminated.  The loop ends
when the combined increment |du|_V + ||dp|| drops below end_tol times the
previous iterate's size, the convergence measure used for all studies.
"""

import numpy as np
import scipy.sparse as sp
from dataclasses import dataclass, field

from .assembly import (SaddleSystem, assemble_convection, assemble_divergence,
                       assemble_laplacian, assemble_load_lifted, build_dofmap)
from .interpolation import CrFunction, P0Function, interpolate_cr, project_p0
from .linalg import gmres, ilu0_factorize


@dataclass
class PicardConfig:
    """Fixed-point loop controls.

    init selects the starting iterate: "exact" interpolates the problem's
    exact solution (the study protocol), "stokes" solves the linear problem
    first, "zero" starts from rest; "auto" means exact when available.
    """

    end_tol: float = 1e-10
    max_iters: int = 100
    init: str = "auto"
    quad_degree_load: int = 14


@dataclass
class GmresSettings:
    restart: int = 500
    rtol: float = 1e-12
    maxiter: int = 8000


@dataclass
class SolveResult:
    u_h: CrFunction
    p_h: P0Function
    iterations: int
    history: list
    converged: bool
    gmres_iterations: list = field(default_factory=list)


def normalize_pressure(p_h, tri):
    """Shift cell values to area-weighted zero mean over the domain."""
    mean = float(tri.areas @ p_h.values) / float(tri.areas.sum())
    return P0Function(p_h.values - mean)


class _LinearizedFlowSolver:
    """Shared state for the per-iterate saddle solves on one mesh."""

    def __init__(self, problem, tri, config, linear):
        self.tri = tri
        self.nu = problem.nu
        self.config = config
        self.linear = linear
        self.dofmap = build_dofmap(tri)
        dm = self.dofmap
        self.A = assemble_laplacian(tri, dm)
        self.B = assemble_divergence(tri, dm)
        self.load = assemble_load_lifted(tri, dm, problem.f, config.quad_degree_load)

        g_h = interpolate_cr(problem.g, tri)
        self.ub = np.zeros(dm.n_velocity)
        self.ub[dm.boundary_vdofs] = g_h.values.ravel()[dm.boundary_vdofs]

        # index maps for the pinned, boundary-eliminated monolithic system
        self.keep = dm.interior_vdofs
        self.nui = self.keep.size
        self.keep_p = np.arange(1, dm.n_pressure)
        self.npr = self.keep_p.size
        self.vmap = np.full(dm.n_velocity, -1, dtype=np.int64)
        self.vmap[self.keep] = np.arange(self.nui)

        bc = self.B.tocoo()
        self.pmap = np.full(dm.n_pressure, -1, dtype=np.int64)
        self.pmap[self.keep_p] = np.arange(self.npr)
        keep_entry = (self.pmap[bc.row] >= 0) & (self.vmap[bc.col] >= 0)
        self._b_rows = self.pmap[bc.row[keep_entry]] + self.nui
        self._b_cols = self.vmap[bc.col[keep_entry]]
        self._b_vals = bc.data[keep_entry]
        bnd_entry = (self.pmap[bc.row] >= 0) & (self.vmap[bc.col] < 0)
        self.rhs_p = -np.bincount(self.pmap[bc.row[bnd_entry]],
                                  weights=bc.data[bnd_entry] * self.ub[bc.col[bnd_entry]],
                                  minlength=self.npr)

    def solve_linearized(self, u_prev, x0):
        """One saddle solve at the frozen state (None for plain Stokes)."""
        dm = self.dofmap
        K = self.nu * self.A
        if u_prev is not None:
            K = (K + assemble_convection(self.tri, dm, u_prev)).tocoo()
        else:
            K = K.tocoo()
        ri, ci = self.vmap[K.row], self.vmap[K.col]
        inner = (ri >= 0) & (ci >= 0)
        lift = (ri >= 0) & (ci < 0)
        rhs_u = self.load[self.keep] - np.bincount(
            ri[lift], weights=K.data[lift] * self.ub[K.col[lift]], minlength=self.nui)

        n = self.nui + self.npr
        rows = np.concatenate([ri[inner], self._b_rows, self._b_cols,
                               np.arange(self.nui, n)])
        cols = np.concatenate([ci[inner], self._b_cols, self._b_rows,
                               np.arange(self.nui, n)])
        vals = np.concatenate([K.data[inner], self._b_vals, self._b_vals,
                               np.zeros(self.npr)])
        S = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        S.sort_indices()
        rhs = np.concatenate([rhs_u, self.rhs_p])

        M = ilu0_factorize(S)
        x, report = gmres(S, rhs, M=M, x0=x0, restart=self.linear.restart,
                          rtol=self.linear.rtol, maxiter=self.linear.maxiter)
        if not report.converged:
            raise RuntimeError(
                f"linear solve stalled: relres {report.relative_residual:.2e} "
                f"after {report.iterations} iterations")
        return x, report

    def split(self, x):
        """Expand a solution vector into full-mesh velocity and pressure."""
        u = self.ub.copy()
        u[self.keep] = x[:self.nui]
        p = np.zeros(self.dofmap.n_pressure)
        p[self.keep_p] = x[self.nui:]
        u_h = CrFunction(u.reshape(2, -1), self.tri.is_boundary_facet.copy())
        return u_h, normalize_pressure(P0Function(p), self.tri)

    def pack(self, u_h, p_h):
        """Warm-start vector; the pressure is shifted to the pinned gauge."""
        return np.concatenate([u_h.values.ravel()[self.keep],
                               p_h.values[self.keep_p] - p_h.values[0]])

    def velocity_norm(self, values):
        flat = values.ravel()
        return float(np.sqrt(max(flat @ (self.A @ flat), 0.0)))

    def pressure_norm(self, values):
        return float(np.sqrt(max(self.tri.areas @ values ** 2, 0.0)))


def solve_stokes(problem, tri, config=None, linear=None):
    """Solve the viscous problem without convection (also the "stokes" init)."""
    config = config or PicardConfig()
    linear = linear or GmresSettings()
    ctx = _LinearizedFlowSolver(problem, tri, config, linear)
    x, report = ctx.solve_linearized(None, None)
    u_h, p_h = ctx.split(x)
    return SolveResult(u_h=u_h, p_h=p_h, iterations=1, history=[],
                       converged=True, gmres_iterations=[report.iterations])


def picard_solve(problem, tri, config=None, linear=None):
    """Run the fixed-point iteration to the relative-increment criterion.

    Needs problem.f, problem.g, problem.nu; "exact"/"auto" initialization
    additionally uses problem.u and problem.p.  Returns the last iterate
    with converged=False if max_iters is exhausted.
    """
    config = config or PicardConfig()
    linear = linear or GmresSettings()
    ctx = _LinearizedFlowSolver(problem, tri, config, linear)

    init = config.init
    if init == "auto":
        init = "exact" if getattr(problem, "u", None) is not None else "stokes"
    if init == "exact":
        u_h = interpolate_cr(problem.u, tri)
        p_h = normalize_pressure(project_p0(problem.p, tri, degree=config.quad_degree_load), tri)
    elif init == "stokes":
        res = solve_stokes(problem, tri, config, linear)
        u_h, p_h = res.u_h, res.p_h
    elif init == "zero":
        u_h = CrFunction(ctx.ub.reshape(2, -1).copy(), tri.is_boundary_facet.copy())
        p_h = P0Function(np.zeros(tri.num_cells))
    else:
        raise ValueError(f"unknown init {config.init!r}")

    history = []
    gmres_iters = []
    x = ctx.pack(u_h, p_h)
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        # x stays in the pinned pressure gauge for the next warm start;
        # the public iterate carries the mean-normalized pressure
        x, report = ctx.solve_linearized(u_h, x)
        gmres_iters.append(report.iterations)
        u_next, p_next = ctx.split(x)

        increment = (ctx.velocity_norm(u_next.values - u_h.values) +
                     ctx.pressure_norm(p_next.values - p_h.values))
        size = ctx.velocity_norm(u_h.values) + ctx.pressure_norm(p_h.values)
        history.append(increment)
        u_h, p_h = u_next, p_next
        if increment <= config.end_tol * size:
            converged = True
            break

    return SolveResult(u_h=u_h, p_h=p_h, iterations=iterations,
                       history=history, converged=converged,
                       gmres_iterations=gmres_iters)
