"""Pressure-robust nonconforming flow solver on graded triangle meshes."""

__version__ = "0.1.0"

from .mesh import (
    Triangulation,
    build_triangulation,
    generate_graded_mesh,
    cell_geometry,
    quality_report,
    export_vtk,
    save_mesh,
    load_mesh,
)
from .elements import (quadrature_rule, edge_quadrature, midpoint_rule,
                       seven_point_rule)
from .interpolation import (
    CrFunction,
    P0Function,
    Rt0Function,
    interpolate_cr,
    interpolate_rt0,
    project_p0,
    lift_cr_to_rt0,
)
from .assembly import (
    DofMap,
    build_dofmap,
    assemble_laplacian,
    assemble_divergence,
    assemble_convection,
    assemble_load_lifted,
    apply_dirichlet,
)
from .linalg import gmres, ilu0_factorize, save_matrix, load_matrix
from .solver import (
    GmresSettings,
    PicardConfig,
    SolveResult,
    picard_solve,
    solve_stokes,
    normalize_pressure,
)
from .analysis import (
    ExactProblem,
    example1,
    example2,
    momentum_residual,
    error_velocity_h1,
    error_velocity_l2,
    error_pressure,
    convergence_rate,
    discrete_sobolev_probe,
    run_study,
    StudyReport,
    ConvergenceRow,
)
