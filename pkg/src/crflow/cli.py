"""Batch front-end: studies, mesh reports, single solves, embedding probes.

Everything here is plumbing around the library: parse flags and config
files into a StudyConfig, dispatch to the analysis module, and print the
results as CSV or aligned text tables.  Output is deterministic — the same
config produces byte-identical files, so study artifacts can be diffed.
"""

import argparse
import configparser
import os
import sys
from dataclasses import dataclass, field, fields

from .analysis import (EXAMPLES, discrete_sobolev_probe, error_pressure,
                       error_velocity_h1, error_velocity_l2, run_study)
from .interpolation import broken_divergence, cr_cell_average
from .mesh import export_vtk, generate_graded_mesh, quality_report
from .solver import GmresSettings, PicardConfig, picard_solve

CSV_SCHEMA = "# crflow study schema v1"
CSV_COLUMNS = "N,h,Err_Vh,rate,Err_L2,rate,Err_Qh,rate,iters,dofs"


@dataclass
class StudyConfig:
    """Validated inputs for one study: problem, mesh family, solver knobs."""

    example: str = "example1"
    mesh: str = "mesh1"
    eps: float = 1.0
    n_list: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    nu: float = None
    picard: PicardConfig = field(default_factory=PicardConfig)
    linear: GmresSettings = field(default_factory=GmresSettings)
    workers: int = 1
    csv: str = None
    table: str = None

    def validate(self):
        if self.example not in EXAMPLES:
            raise ValueError(f"unknown example '{self.example}'"
                             f" (choices: {', '.join(sorted(EXAMPLES))})")
        if self.mesh not in ("mesh1", "mesh2"):
            raise ValueError(f"unknown mesh family '{self.mesh}'"
                             " (choices: mesh1, mesh2)")
        if self.eps < 1.0:
            raise ValueError(f"grading exponent eps must be >= 1, got {self.eps}")
        if not self.n_list:
            raise ValueError("n list must not be empty")
        if any(n < 2 for n in self.n_list):
            raise ValueError("every N must be at least 2")
        if sorted(self.n_list) != self.n_list or len(set(self.n_list)) != len(self.n_list):
            raise ValueError("n list must be strictly ascending")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        return self


_SOLVER_KEYS = {
    "nu": float,
    "end_tol": float,
    "max_iters": int,
    "init": str,
    "quad_degree_load": int,
    "restart": int,
    "rtol": float,
    "maxiter": int,
    "workers": int,
}
_STUDY_KEYS = {"example": str, "mesh": str, "eps": float, "n": str}
_OUTPUT_KEYS = {"csv": str, "table": str}
_PICARD_FIELDS = {f.name for f in fields(PicardConfig)}
_GMRES_FIELDS = {f.name for f in fields(GmresSettings)}


def _parse_n_list(text):
    try:
        return [int(part) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"bad n list '{text}': expected comma-separated integers")


def _canonical_example(name):
    name = str(name).strip().lower()
    if name in ("1", "2"):
        return f"example{name}"
    return name


def load_config(path):
    """Read a study config file: INI sections [study], [solver], [output].

    Unknown sections or keys are rejected outright — a typo in a study
    config silently falling back to a default would poison a whole table.
    """
    parser = configparser.ConfigParser()
    with open(path) as handle:
        parser.read_file(handle)
    known = {"study": _STUDY_KEYS, "solver": _SOLVER_KEYS, "output": _OUTPUT_KEYS}
    for section in parser.sections():
        if section not in known:
            raise ValueError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in known[section]:
                raise ValueError(f"unknown key '{key}' in section [{section}]")

    config = StudyConfig()
    study = parser["study"] if parser.has_section("study") else {}
    if "example" in study:
        config.example = _canonical_example(study["example"])
    if "mesh" in study:
        config.mesh = study["mesh"].strip()
    if "eps" in study:
        config.eps = float(study["eps"])
    if "n" in study:
        config.n_list = _parse_n_list(study["n"])
    solver = parser["solver"] if parser.has_section("solver") else {}
    for key, value in solver.items():
        cast = _SOLVER_KEYS[key](value)
        if key == "nu":
            config.nu = cast
        elif key == "workers":
            config.workers = cast
        elif key in _PICARD_FIELDS:
            setattr(config.picard, key, cast)
        else:
            setattr(config.linear, key, cast)
    output = parser["output"] if parser.has_section("output") else {}
    config.csv = output.get("csv", None)
    config.table = output.get("table", None)
    return config.validate()


def _apply_flags(config, args):
    """Command-line flags override config-file values."""
    if args.example is not None:
        config.example = _canonical_example(args.example)
    if args.mesh is not None:
        config.mesh = args.mesh
    if args.eps is not None:
        config.eps = args.eps
    if args.n is not None:
        config.n_list = _parse_n_list(args.n)
    if args.nu is not None:
        config.nu = args.nu
    if getattr(args, "workers", None) is not None:
        config.workers = args.workers
    if getattr(args, "csv", None) is not None:
        config.csv = args.csv
    if getattr(args, "table", None) is not None:
        config.table = args.table
    return config.validate()


def _worker_cap():
    cap = os.environ.get("CRFLOW_MAX_WORKERS")
    return int(cap) if cap else None


def _effective_workers(requested):
    cap = _worker_cap()
    return min(requested, cap) if cap else requested


def _grading(config):
    return ("power", config.eps) if config.mesh == "mesh1" else ("cosine", 1.0)


def _problem(config):
    problem = EXAMPLES[config.example]()
    if config.nu is not None:
        problem.nu = config.nu
    return problem


def _fmt_rate(rate):
    return "    -" if rate != rate else f"{rate:5.2f}"


def study_table_lines(report):
    """Aligned text table with the same columns as the CSV."""
    lines = [f"{'N':>4} {'h':>9} {'Err(V_h)':>12} {'r':>5} {'Err(L2)':>12}"
             f" {'r':>5} {'Err(Q_h)':>12} {'r':>5} {'iters':>6} {'dofs':>8}"]
    for row in report.rows:
        lines.append(
            f"{row.N:>4} {row.h:>9.2e} {row.err_vh:>12.5e} {_fmt_rate(row.rate_vh)}"
            f" {row.err_l2:>12.5e} {_fmt_rate(row.rate_l2)}"
            f" {row.err_qh:>12.5e} {_fmt_rate(row.rate_qh)}"
            f" {row.picard_iters:>6} {row.dofs:>8}")
    return lines


def study_csv_lines(report):
    lines = [CSV_SCHEMA, CSV_COLUMNS]
    for row in report.rows:
        rates = [("" if r != r else f"{r:.17g}")
                 for r in (row.rate_vh, row.rate_l2, row.rate_qh)]
        lines.append(",".join([
            str(row.N), f"{row.h:.17g}",
            f"{row.err_vh:.17g}", rates[0],
            f"{row.err_l2:.17g}", rates[1],
            f"{row.err_qh:.17g}", rates[2],
            str(row.picard_iters), str(row.dofs)]))
    return lines


def mesh_report_lines(mesh, eps, n_list):
    """Quality table: one row per N with the printed-table metrics."""
    lines = [f"{'N':>4} {'#Np':>8} {'MinAngle':>12} {'MaxAngle':>9} {'DisSov':>12}"]
    for n in n_list:
        grading = ("power", eps) if mesh == "mesh1" else ("cosine", 1.0)
        tri = generate_graded_mesh(n, grading[0], grading[1])
        q = quality_report(tri)
        lines.append(f"{n:>4} {q.num_dofs:>8} {q.min_angle_metric:>12.5e}"
                     f" {q.max_angle_metric:>9.2f} {q.dis_sov:>12.5e}")
    return lines


def _write_lines(lines, path):
    text = "\n".join(lines) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as handle:
            handle.write(text)


def _cmd_study(args):
    config = StudyConfig() if args.config is None else load_config(args.config)
    _apply_flags(config, args)
    grading, eps = _grading(config)
    example = config.example if config.nu is None else _problem(config)
    report = run_study(example, grading, eps, config.n_list,
                       picard=config.picard, linear=config.linear,
                       workers=_effective_workers(config.workers))
    if config.csv:
        _write_lines(study_csv_lines(report), config.csv)
    _write_lines(study_table_lines(report), config.table)
    return 0


def _cmd_mesh_report(args):
    if args.mesh == "mesh1" and args.eps is None:
        args.eps = 1.0
    eps = args.eps if args.eps is not None else 1.0
    if eps < 1.0:
        raise ValueError(f"grading exponent eps must be >= 1, got {eps}")
    n_list = _parse_n_list(args.n)
    lines = mesh_report_lines(args.mesh, eps, n_list)
    _write_lines(lines, args.out)
    return 0


def _cmd_solve_once(args):
    config = _apply_flags(StudyConfig(), args)
    if len(config.n_list) != 1:
        raise ValueError("solve-once takes a single N")
    n = config.n_list[0]
    grading, eps = _grading(config)
    problem = _problem(config)
    tri = generate_graded_mesh(n, grading, eps)
    result = picard_solve(problem, tri, config.picard, config.linear)
    err_vh = error_velocity_h1(result.u_h, problem, tri)
    err_l2 = error_velocity_l2(result.u_h, problem, tri)
    err_qh = error_pressure(result.p_h, problem, tri)
    print(f"{config.example} {config.mesh} eps={eps} N={n}:"
          f" iterations={result.iterations} converged={result.converged}")
    print(f"Err(V_h)={err_vh:.5e} Err(L2)={err_l2:.5e} Err(Q_h)={err_qh:.5e}")
    if args.vtk:
        div = broken_divergence(result.u_h, tri)
        export_vtk(tri, args.vtk,
                   cell_scalars={"pressure": result.p_h.values,
                                 "divergence": div},
                   cell_vectors={"velocity": cr_cell_average(result.u_h, tri).values},
                   title=f"{config.example} {config.mesh} N={n}")
        print(f"wrote {args.vtk}")
    return 0 if result.converged else 1


def _cmd_sobolev_probe(args):
    if args.eps is not None and args.eps < 1.0:
        raise ValueError(f"grading exponent eps must be >= 1, got {args.eps}")
    eps = args.eps if args.eps is not None else 1.0
    n_list = _parse_n_list(args.n)
    print(f"{'N':>4} {'probe':>12} {'DisSov':>12}")
    for n in n_list:
        grading = ("power", eps) if args.mesh == "mesh1" else ("cosine", 1.0)
        tri = generate_graded_mesh(n, grading[0], grading[1])
        probe = discrete_sobolev_probe(tri, p=args.p, samples=args.samples)
        q = quality_report(tri, p=args.p)
        print(f"{n:>4} {probe:>12.5e} {q.dis_sov:>12.5e}")
    return 0


def _add_mesh_flags(sub, with_example=True):
    if with_example:
        sub.add_argument("--example", help="example1|example2 (or 1|2)")
        sub.add_argument("--nu", type=float, help="viscosity override")
    sub.add_argument("--mesh", choices=("mesh1", "mesh2"),
                     help="mesh1: power-graded; mesh2: cosine-graded")
    sub.add_argument("--eps", type=float, help="grading exponent (mesh1)")
    sub.add_argument("--n", help="comma-separated subdivision counts")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crflow",
        description="Convergence studies for the lifted nonconforming flow solver")
    commands = parser.add_subparsers(dest="command", required=True)

    study = commands.add_parser("study", help="run a mesh-refinement study")
    _add_mesh_flags(study)
    study.add_argument("--config", help="INI config file ([study]/[solver]/[output])")
    study.add_argument("--workers", type=int, help="parallel rows (capped by "
                       "CRFLOW_MAX_WORKERS)")
    study.add_argument("--csv", help="write machine-readable table here")
    study.add_argument("--table", help="write aligned table here (default stdout)")
    study.set_defaults(handler=_cmd_study)

    mesh = commands.add_parser("mesh-report", help="mesh quality metrics table")
    _add_mesh_flags(mesh, with_example=False)
    mesh.add_argument("--out", help="output path (default stdout)")
    mesh.set_defaults(handler=_cmd_mesh_report, mesh="mesh1",
                      n="4,8,16,32,64,128")

    once = commands.add_parser("solve-once", help="solve a single mesh and report")
    _add_mesh_flags(once)
    once.add_argument("--vtk", help="export mesh + solution fields here")
    once.set_defaults(handler=_cmd_solve_once, n="4")

    probe = commands.add_parser("sobolev-probe",
                                help="empirical discrete embedding constants")
    _add_mesh_flags(probe, with_example=False)
    probe.add_argument("--p", type=float, default=4.0, help="Lebesgue exponent")
    probe.add_argument("--samples", type=int, default=64,
                       help="random fields per mesh")
    probe.set_defaults(handler=_cmd_sobolev_probe, mesh="mesh1", n="4,8,16,32")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ValueError, OSError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
