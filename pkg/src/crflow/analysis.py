"""Manufactured problems, error measures, and convergence studies.

The two benchmark problems share a deliberately nasty pressure containing a
1e5-scale cubic: for the first one the velocity is a smooth vortex and the
forcing is derived symbolically from the momentum equation; for the second
the velocity is a rigid rotation lying inside the discrete space, so any
velocity error measures solver noise rather than discretization error
(the pressure-robustness showcase).  A finite-difference residual check
guards the symbolic derivation.
"""

import numpy as np
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .elements import midpoint_rule, quadrature_rule, seven_point_rule
from .interpolation import cr_at_bary, cr_gradients, CrFunction
from .mesh import generate_graded_mesh, quality_report
from .solver import GmresSettings, PicardConfig, picard_solve


@dataclass
class ExactProblem:
    """Closed-form data of a manufactured flow.

    All callbacks take an (n, 2) point array; u and f return (n, 2), p
    returns (n,), grad_u returns (n, 2, 2) indexed [point, component,
    derivative], and g is the boundary trace of u.
    """

    nu: float
    u: callable
    grad_u: callable
    p: callable
    f: callable
    g: callable
    name: str = "custom"


def _lambdify_fields(nu, u_sym, p_sym, x1, x2):
    """Build vectorized closures from symbolic velocity/pressure.

    The forcing comes from the rotational-form momentum equation
    f = -nu*Lap(u) + (curl u) x u + grad p.
    """
    import sympy as sym

    u1, u2 = u_sym
    curl = sym.diff(u2, x1) - sym.diff(u1, x2)
    f1 = -nu * (sym.diff(u1, x1, 2) + sym.diff(u1, x2, 2)) - curl * u2 + sym.diff(p_sym, x1)
    f2 = -nu * (sym.diff(u2, x1, 2) + sym.diff(u2, x2, 2)) + curl * u1 + sym.diff(p_sym, x2)
    grads = [sym.diff(u1, x1), sym.diff(u1, x2), sym.diff(u2, x1), sym.diff(u2, x2)]
    fns = [sym.lambdify((x1, x2), e, "numpy")
           for e in (u1, u2, p_sym, f1, f2, *grads)]

    def ev(fn, x):
        out = fn(x[:, 0], x[:, 1])
        return np.broadcast_to(np.asarray(out, dtype=float), (x.shape[0],))

    def u(x):
        return np.stack([ev(fns[0], x), ev(fns[1], x)], axis=1)

    def p(x):
        return ev(fns[2], x)

    def f(x):
        return np.stack([ev(fns[3], x), ev(fns[4], x)], axis=1)

    def grad_u(x):
        cols = [ev(fn, x) for fn in fns[5:]]
        return np.stack(cols, axis=1).reshape(-1, 2, 2)

    return u, p, f, grad_u


def example1():
    """Vortex velocity u = curl(phi) with a 1e5-scale gradient pressure."""
    import sympy as sym

    x1, x2 = sym.symbols("x1 x2")
    phi = 64 * x1 ** 2 * (x1 - 1) ** 2 * x2 ** 2 * (x2 - 1) ** 2
    u1 = sym.diff(phi, x2)
    u2 = -sym.diff(phi, x1)
    nu = 0.1
    p_sym = (u1 ** 2 + u2 ** 2) / 2 - 0.1238397581254773 \
        + 10 ** 5 * (1 - x2) ** 3 - 10 ** 5 / sym.Integer(4)
    u, p, f, grad_u = _lambdify_fields(nu, (u1, u2), p_sym, x1, x2)
    return ExactProblem(nu=nu, u=u, grad_u=grad_u, p=p, f=f, g=u, name="example1")


def example2():
    """Rigid rotation with the same large irrotational forcing, taken verbatim."""
    def u(x):
        return np.stack([0.5 - x[:, 1], x[:, 0] - 0.5], axis=1)

    def grad_u(x):
        g = np.array([[0.0, -1.0], [1.0, 0.0]])
        return np.broadcast_to(g, (x.shape[0], 2, 2))

    def p(x):
        return ((x[:, 0] - 0.5) ** 2 + (x[:, 1] - 0.5) ** 2 - 1.0 / 6.0
                + 1e5 * (1.0 - x[:, 1]) ** 3 - 1e5 / 4.0)

    def f(x):
        return np.stack([np.zeros(x.shape[0]),
                         -3e5 * (1.0 - x[:, 1]) ** 2], axis=1)

    return ExactProblem(nu=1.0, u=u, grad_u=grad_u, p=p, f=f, g=u, name="example2")


EXAMPLES = {"example1": example1, "example2": example2}


def momentum_residual(problem, npoints=1000, seed=0, step=3e-4):
    """Scale-relative defect of f against the momentum equation.

    Laplacian, curl and pressure gradient are formed by central finite
    differences of the u and p callbacks at random interior points; the
    maximum defect is divided by max(1, max |f|) over the sample.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(2 * step, 1 - 2 * step, size=(npoints, 2))
    h = step

    def shift(dx, dy):
        return x + np.array([dx, dy])

    uc = problem.u(x)
    ue = problem.u(shift(h, 0)); uw = problem.u(shift(-h, 0))
    un = problem.u(shift(0, h)); us = problem.u(shift(0, -h))
    lap = (ue + uw + un + us - 4 * uc) / h ** 2
    curl = ((ue[:, 1] - uw[:, 1]) - (un[:, 0] - us[:, 0])) / (2 * h)
    gradp = np.stack([(problem.p(shift(h, 0)) - problem.p(shift(-h, 0))) / (2 * h),
                      (problem.p(shift(0, h)) - problem.p(shift(0, -h))) / (2 * h)],
                     axis=1)
    rot = np.stack([-curl * uc[:, 1], curl * uc[:, 0]], axis=1)
    f_fd = -problem.nu * lap + rot + gradp
    f_ex = problem.f(x)
    scale = max(1.0, np.abs(f_ex).max())
    return float(np.abs(f_fd - f_ex).max() / scale)


def _resolve_rule(rule, default):
    if rule is None:
        return default()
    if isinstance(rule, (int, np.integer)):
        return quadrature_rule(rule)
    return rule


def _quad_data(tri, rule):
    pts = np.einsum("ql,clx->cqx", rule.points, tri.vertices[tri.cells])
    W = rule.weights[None, :] * tri.areas[:, None]
    return pts, W


def error_velocity_h1(u_h, problem, tri, rule=None):
    """Relative broken H1 seminorm |u - u_h| / |u|.

    Defaults to the closed seven-point rule so that all three error
    measures share one sampling convention (cell vertices, edge midpoints,
    centroid).  The discrete gradient is cellwise constant, so the rule
    only samples the exact field; on coarse strongly-graded meshes an
    exactly-integrated seminorm reads a few percent above the sampled
    convention.  Pass an integer degree or a QuadratureRule to measure
    differently (degree 12 integrates both benchmark integrands exactly).
    """
    rule = _resolve_rule(rule, seven_point_rule)
    pts, W = _quad_data(tri, rule)
    ge = problem.grad_u(pts.reshape(-1, 2)).reshape(pts.shape[0], pts.shape[1], 2, 2)
    gh = cr_gradients(u_h, tri)
    num = float((W * ((ge - gh[:, None]) ** 2).sum(axis=(2, 3))).sum())
    den = float((W * (ge ** 2).sum(axis=(2, 3))).sum())
    if den == 0.0:
        raise ZeroDivisionError("exact velocity has zero H1 seminorm")
    return float(np.sqrt(num / den))


def error_velocity_l2(u_h, problem, tri, rule=None):
    """Relative L2 norm ||u - u_h|| / ||u||.

    Defaults to the closed seven-point rule: the nonconforming error is
    largest at cell corners, and a norm blind to corners (any interior
    Gauss rule) systematically under-reports it.  Pass an integer degree
    or a QuadratureRule to measure differently.
    """
    rule = _resolve_rule(rule, seven_point_rule)
    pts, W = _quad_data(tri, rule)
    ue = problem.u(pts.reshape(-1, 2)).reshape(pts.shape[:2] + (2,))
    uh = cr_at_bary(u_h, tri, rule.points)
    num = float((W * ((ue - uh) ** 2).sum(axis=2)).sum())
    den = float((W * (ue ** 2).sum(axis=2)).sum())
    if den == 0.0:
        raise ZeroDivisionError("exact velocity has zero L2 norm")
    return float(np.sqrt(num / den))


def error_pressure(p_h, problem, tri, rule=None):
    """Relative L2 distance after removing the mean from both pressures.

    Defaults to the edge-midpoint rule, the natural companion norm for a
    cellwise-constant pressure: it samples the exact field at the points
    shared between neighbouring cells.
    """
    rule = _resolve_rule(rule, midpoint_rule)
    pts, W = _quad_data(tri, rule)
    pe = problem.p(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    area = float(tri.areas.sum())
    pe = pe - (W * pe).sum() / area
    ph = p_h.values - float(tri.areas @ p_h.values) / area
    num = float((W * (pe - ph[:, None]) ** 2).sum())
    den = float((W * pe ** 2).sum())
    if den == 0.0:
        raise ZeroDivisionError("exact pressure is constant")
    return float(np.sqrt(num / den))


def convergence_rate(e_coarse, e_fine, ratio=2.0):
    """Observed order log(e_coarse/e_fine)/log(ratio)."""
    if e_coarse <= 0.0 or e_fine <= 0.0:
        raise ValueError("errors must be positive")
    return float(np.log(e_coarse / e_fine) / np.log(ratio))


def discrete_sobolev_probe(tri, p=4.0, samples=64, seed=0):
    """Empirical lower bound for the discrete Sobolev constant.

    Draws random zero-boundary facet functions and maximizes
    ||phi||_{L^p} / |phi|_{H1,broken}; degenerate draws with vanishing
    seminorm are skipped.  Bounded values along a mesh family indicate the
    embedding constant stays under control as anisotropy grows.
    """
    rng = np.random.default_rng(seed)
    rule = quadrature_rule(max(4, int(np.ceil(p))))
    pts, W = _quad_data(tri, rule)
    best = 0.0
    for _ in range(samples):
        values = rng.normal(size=tri.num_facets)
        values[tri.is_boundary_facet] = 0.0
        phi = CrFunction(values, tri.is_boundary_facet.copy())
        g = cr_gradients(phi, tri)
        h1 = float(tri.areas @ (g ** 2).sum(axis=1))
        if h1 <= 1e-28 * float(values @ values):
            continue
        vals = cr_at_bary(phi, tri, rule.points)
        lp = float((W * np.abs(vals) ** p).sum()) ** (1.0 / p)
        best = max(best, lp / np.sqrt(h1))
    return best


@dataclass
class ConvergenceRow:
    """One mesh's errors; rates appear from the second row on."""

    N: int
    h: float
    err_vh: float
    rate_vh: float
    err_l2: float
    rate_l2: float
    err_qh: float
    rate_qh: float
    picard_iters: int
    dofs: int


@dataclass
class StudyReport:
    rows: list
    quality: list
    metadata: dict = field(default_factory=dict)


def _mesh_for(grading, eps, n):
    if grading == "power":
        return generate_graded_mesh(n, "power", eps)
    return generate_graded_mesh(n, grading)


def _errors(result, problem, tri):
    return dict(
        err_vh=error_velocity_h1(result.u_h, problem, tri),
        err_l2=error_velocity_l2(result.u_h, problem, tri),
        err_qh=error_pressure(result.p_h, problem, tri),
    )


def _study_row(args):
    (name, nu_override, grading, eps, n, picard_kw, linear_kw) = args
    problem = EXAMPLES[name]()
    if nu_override is not None:
        problem.nu = nu_override
    tri = _mesh_for(grading, eps, n)
    result = picard_solve(problem, tri, PicardConfig(**picard_kw),
                          GmresSettings(**linear_kw))
    if not result.converged:
        raise RuntimeError(f"iteration did not converge on N={n}")
    row = dict(N=n, h=tri.h, picard_iters=result.iterations,
               **_errors(result, problem, tri))
    return row, quality_report(tri)


def run_study(example, grading, eps, n_list, picard=None, linear=None,
              workers=1):
    """Solve on a mesh sequence and tabulate errors, rates, and quality.

    `example` is an ExactProblem or a registered name ("example1",
    "example2"); names are required for multi-process execution.  Rows are
    ordered by N; each rate compares consecutive rows.
    """
    if sorted(n_list) != list(n_list):
        raise ValueError("n_list must be ascending")
    picard = picard or PicardConfig()
    linear = linear or GmresSettings()
    pk, lk = vars(picard).copy(), vars(linear).copy()

    if isinstance(example, str):
        name, problem, nu_override = example, EXAMPLES[example](), None
    else:
        name, problem, nu_override = example.name, example, example.nu

    rows_raw = []
    if workers > 1 and name in EXAMPLES:
        jobs = [(name, nu_override, grading, eps, n, pk, lk) for n in n_list]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows_raw = list(pool.map(_study_row, jobs))
    else:
        for n in n_list:
            if name in EXAMPLES:
                rows_raw.append(_study_row(
                    (name, nu_override, grading, eps, n, pk, lk)))
            else:
                tri = _mesh_for(grading, eps, n)
                result = picard_solve(problem, tri, picard, linear)
                if not result.converged:
                    raise RuntimeError(f"iteration did not converge on N={n}")
                row = dict(N=n, h=tri.h, picard_iters=result.iterations,
                           **_errors(result, problem, tri))
                rows_raw.append((row, quality_report(tri)))

    rows, quality = [], []
    prev = None
    for row, q in rows_raw:
        rates = {"rate_vh": float("nan"), "rate_l2": float("nan"),
                 "rate_qh": float("nan")}
        if prev is not None:
            ratio = row["N"] / prev["N"]
            for key in ("vh", "l2", "qh"):
                rates[f"rate_{key}"] = convergence_rate(
                    prev[f"err_{key}"], row[f"err_{key}"], ratio)
        rows.append(ConvergenceRow(dofs=q.num_dofs, **row, **rates))
        quality.append(q)
        prev = row

    metadata = dict(example=name, grading=grading, eps=eps, nu=problem.nu,
                    n_list=list(n_list),
                    error_rules=dict(vh="seven-point", l2="seven-point",
                                     qh="edge-midpoint"),
                    picard=pk, gmres=lk)
    return StudyReport(rows=rows, quality=quality, metadata=metadata)
