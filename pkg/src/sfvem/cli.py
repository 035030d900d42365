"""Command-line driver: ``sfvem <patch|eigenscan|converge|solve> [options]``.

Exit codes: 0 success, 1 a reproduction check deviated, 2 bad input.
"""

from __future__ import annotations

import argparse
import ast
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    FAMILIES,
    REPORTED_THRESHOLDS,
    ErrorReport,
    eigen_scan,
    error_energy,
    error_l2,
    error_linf,
    fit_reports,
    write_eigen_csv,
    write_error_csv,
    write_error_dat,
)
from .assembly import BoundaryConditionError, Dirichlet, MaterialModel, ProblemDefinition, SolverError, assemble_global, solve, write_reactions, write_solution
from .benchmarks import CASES, DEFAULT_LLOYD, SelfCheckError, case_patch, get_case, patch_meshes, run_mesh
from .geometry import MeshError, load_mesh
from .polyspace import DegreePolicy

EXIT_OK, EXIT_DEVIATION, EXIT_INPUT = 0, 1, 2
PATCH_TOL = 1e-10
L2_BAND = (1.8, 2.2)
ENERGY_BAND = (0.85, 1.15)
POLICIES = {"paper": "paper_sufficient", "strict": "strict_regular", "verified": "verified"}


class InputError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    case: str | None
    meshes: tuple[int, ...] | None
    lloyd: int | None
    seed: int
    policy: DegreePolicy | None
    compare_stabilized: bool
    mesh_file: Path | None
    problem_file: Path | None
    out: Path


def _parse_meshes(text: str) -> tuple[int, ...]:
    try:
        sizes = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"--meshes expects comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("--meshes needs at least one positive size")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sfvem", description="Stabilization-free virtual elements for plane elasticity.")
    p.add_argument("--version", action="version", version=f"sfvem {__version__}")
    p.add_argument("command", choices=("patch", "eigenscan", "converge", "solve"))
    p.add_argument("--case", choices=sorted(CASES), help="benchmark case (converge, solve)")
    p.add_argument("--meshes", type=_parse_meshes, help="comma-separated cell counts, e.g. 150,350,800")
    p.add_argument("--lloyd", type=int, help=f"Lloyd iterations (default {DEFAULT_LLOYD}; 3 for patch)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ell-policy", choices=sorted(POLICIES), help="strain degree rule (default: strict, or the case's own)")
    p.add_argument("--compare-stabilized", action="store_true", help="also run the stabilized baseline")
    p.add_argument("--mesh-file", type=Path)
    p.add_argument("--problem", type=Path, help="JSON problem definition for solve")
    p.add_argument("--out", type=Path, default=Path("."))
    return p


def parse_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    if args.lloyd is not None and args.lloyd < 0:
        raise InputError("--lloyd must be >= 0")
    policy = DegreePolicy(POLICIES[args.ell_policy]) if args.ell_policy else None
    if args.mesh_file is not None and not args.mesh_file.is_file():
        raise InputError(f"mesh file not found: {args.mesh_file}")
    if args.problem is not None and not args.problem.is_file():
        raise InputError(f"problem file not found: {args.problem}")
    return RunConfig(args.command, args.case, args.meshes, args.lloyd, args.seed, policy, args.compare_stabilized, args.mesh_file, args.problem, args.out)


def _in_band(value: float, band) -> bool:
    return band[0] <= value <= band[1]


# --------------------------------------------------------------- patch


def cmd_patch(cfg: RunConfig) -> int:
    case = case_patch()
    case.self_check()
    if cfg.mesh_file:
        meshes = {cfg.mesh_file.stem: load_mesh(cfg.mesh_file)}
    else:
        meshes = patch_meshes(cfg.seed, 3 if cfg.lloyd is None else cfg.lloyd)
    reports = []
    for name, mesh in meshes.items():
        rep, _, _ = run_mesh(case, mesh, name, cfg.policy)
        reports.append(rep)
    print(f"{'mesh':<10} {'cells':>6} {'L_inf':>11} {'L2':>11} {'energy':>11}")
    worst = 0.0
    for r in reports:
        print(f"{r.mesh_id:<10} {r.n_cells:>6} {r.err_linf:11.3e} {r.err_l2:11.3e} {r.err_energy:11.3e}")
        worst = max(worst, r.err_linf, r.err_l2, r.err_energy)
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "patch.csv", "w") as fh:
        write_error_csv(fh, reports)
    ok = worst <= PATCH_TOL
    print(f"patch test {'PASS' if ok else 'FAIL'}: worst error {worst:.3e} (gate {PATCH_TOL:g})")
    return EXIT_OK if ok else EXIT_DEVIATION


# ----------------------------------------------------------- eigenscan


def cmd_eigenscan(cfg: RunConfig) -> int:
    n_max = 20
    scans = [eigen_scan(f, range(4), range(3 if f == "regular_polygon" else 4, n_max + 1)) for f in FAMILIES]
    cfg.out.mkdir(parents=True, exist_ok=True)
    with open(cfg.out / "eigenscan.csv", "w") as fh:
        write_eigen_csv(fh, scans)
    status = EXIT_OK
    print(f"{'family':<16} {'ell':>3} {'first N_E':>9} {'reported':>8}")
    for scan in scans:
        for ell, n in scan.thresholds().items():
            want = REPORTED_THRESHOLDS[scan.family][ell]
            flag = "" if n == want else "  DEVIATES"
            if n != want:
                status = EXIT_DEVIATION
            print(f"{scan.family:<16} {ell:>3} {str(n):>9} {want:>8}{flag}")
    return status


# ------------------------------------------------------------ converge


def cmd_converge(cfg: RunConfig) -> int:
    name = cfg.case or "beam"
    if name == "patch":
        raise InputError("the patch case has a single mesh size; use the patch command")
    case = get_case(name)
    sizes = cfg.meshes or case.sizes
    if len(sizes) < 3:
        raise InputError("a convergence study needs at least 3 meshes")
    lloyd = DEFAULT_LLOYD if cfg.lloyd is None else cfg.lloyd
    meshes = [case.mesh(n, lloyd, cfg.seed) for n in sizes]
    methods = [False, True] if cfg.compare_stabilized else [False]
    cfg.out.mkdir(parents=True, exist_ok=True)
    status = EXIT_OK
    for stabilized in methods:
        label = "stabilized" if stabilized else "sf"
        reports = []
        for n, mesh in zip(sizes, meshes):
            try:
                rep, _, _ = run_mesh(case, mesh, f"{name}-{n}", cfg.policy, stabilized)
            except SolverError as exc:
                print(f"{label} mesh {n}: solver failure: {exc}", file=sys.stderr)
                status = EXIT_DEVIATION
                continue
            reports.append(rep)
        stem = cfg.out / f"{name}-{label}"
        with open(f"{stem}.csv", "w") as fh:
            write_error_csv(fh, reports)
        with open(f"{stem}.dat", "w") as fh:
            write_error_dat(fh, reports, f"{name} {label}")
        for r in reports:
            print(f"{label:<10} {r.n_cells:>6} h={r.h_max:.4e} linf={r.err_linf:.4e} l2={r.err_l2:.4e} energy={r.err_energy:.4e}")
        if len(reports) < 3:
            print(f"{label}: fewer than 3 successful meshes, no slopes")
            status = EXIT_DEVIATION
            continue
        slopes = fit_reports(reports)
        l2, en = slopes["l2"].slope, slopes["energy"].slope
        ok = _in_band(l2, L2_BAND) and _in_band(en, ENERGY_BAND)
        print(f"{label}: L2 slope {l2:.3f} (band {L2_BAND}), energy slope {en:.3f} (band {ENERGY_BAND}) {'PASS' if ok else 'FAIL'}")
        if not ok:
            status = EXIT_DEVIATION
    return status


# --------------------------------------------------------------- solve

_FUNCS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp, "log": np.log,
    "sqrt": np.sqrt, "abs": np.abs, "hypot": np.hypot, "atan2": np.arctan2,
    "arctan2": np.arctan2, "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide, ast.Pow: np.power}
_UNARY = {ast.USub: np.negative, ast.UAdd: np.positive}


def compile_expression(text: str, variables=("x", "y")):
    """Compile an arithmetic expression of the given variables to a numpy callable.

    Only numbers, the named variables, ``pi``/``e``, + - * / ** and a small
    set of math functions are accepted.
    """
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise InputError(f"bad expression {text!r}: {exc.msg}") from None

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in env:
                return env[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise InputError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand, env))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
            return _FUNCS[node.func.id](*(ev(a, env) for a in node.args))
        raise InputError(f"unsupported syntax in {text!r}")

    ev(tree, {v: 0.5 for v in variables})  # validate eagerly

    def fn(*args):
        env = dict(zip(variables, args))
        return ev(tree, env)

    return fn


def _vector_field(spec, with_normal: bool = False):
    """A 2-vector of constants or expression strings -> constant or callable."""
    if not isinstance(spec, (list, tuple)) or len(spec) != 2:
        raise InputError(f"expected a 2-component vector, got {spec!r}")
    if all(isinstance(v, (int, float)) for v in spec):
        return tuple(float(v) for v in spec)
    names = ("x", "y", "nx", "ny") if with_normal else ("x", "y")
    comps = [compile_expression(v, names) for v in spec]

    if with_normal:

        def t(x, n):
            x = np.asarray(x, dtype=float)
            n = np.asarray(n, dtype=float)
            args = (x[..., 0], x[..., 1], n[..., 0], n[..., 1])
            return np.stack([np.broadcast_to(c(*args), x.shape[:-1]) for c in comps], -1)

        return t

    def f(x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.broadcast_to(c(x[..., 0], x[..., 1]), x.shape[:-1]) for c in comps], -1)

    return f


def load_problem(path: Path, mesh) -> ProblemDefinition:
    """Read a JSON problem definition.

    Keys: ``material`` {E, nu, hypothesis}; ``body_force`` [fx, fy];
    ``dirichlet`` {marker: {value: [ux, uy], components: [bool, bool]}};
    ``traction`` {marker: [tx, ty]} (may use nx, ny); ``pinned``
    [[vertex, component, value], ...]; ``marker_priority`` [...].
    Vector entries are numbers or expression strings in x, y.
    """
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict) or "material" not in data:
        raise InputError(f"{path}: a 'material' entry is required")
    m = data["material"]
    try:
        material = MaterialModel(float(m["E"]), float(m["nu"]), m.get("hypothesis", "plane_stress"))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad material: {exc}") from None
    body = data.get("body_force")
    body_fn = None
    if body is not None:
        bf = _vector_field(body)
        body_fn = bf if callable(bf) else (lambda x, c=np.asarray(bf): np.broadcast_to(c, np.shape(x)[:-1] + (2,)))
    dirichlet = {}
    for marker, spec in data.get("dirichlet", {}).items():
        if not isinstance(spec, dict):
            spec = {"value": spec}
        comps = tuple(bool(c) for c in spec.get("components", (True, True)))
        dirichlet[marker] = Dirichlet(_vector_field(spec.get("value", [0.0, 0.0])), comps)
    traction = {marker: _vector_field(spec, with_normal=True) for marker, spec in data.get("traction", {}).items()}
    pinned = [(int(v), int(c), float(val)) for v, c, val in data.get("pinned", [])]
    for v, c, _ in pinned:
        if not (0 <= v < mesh.n_vertices and c in (0, 1)):
            raise InputError(f"{path}: pinned entry ({v}, {c}) is out of range")
    return ProblemDefinition(mesh, material, body_fn, dirichlet, traction, pinned, tuple(data.get("marker_priority", ())))


def cmd_solve(cfg: RunConfig) -> int:
    if cfg.mesh_file is None:
        raise InputError("solve needs --mesh-file")
    mesh = load_mesh(cfg.mesh_file)
    case = None
    if cfg.problem_file is not None:
        problem = load_problem(cfg.problem_file, mesh)
    elif cfg.case is not None:
        case = get_case(cfg.case)
        problem = case.problem(mesh)
    else:
        raise InputError("solve needs --problem FILE or --case NAME")
    policy = cfg.policy or (case.policy if case else DegreePolicy())
    system = assemble_global(problem, policy=policy)
    sol = solve(system)
    cs = sol.constrained
    u_free = sol.vector[cs.free]
    res = np.linalg.norm(cs.K_ff @ u_free - cs.F_f) / max(np.linalg.norm(cs.F_f), 1e-300)
    energy = 0.5 * float(sol.vector @ (system.K @ sol.vector))
    cfg.out.mkdir(parents=True, exist_ok=True)
    write_solution(cfg.out / "solution.txt", sol)
    write_reactions(cfg.out / "reactions.txt", sol)
    print(f"dofs {system.n_dofs} (free {len(cs.free)}), relative residual {res:.3e}, strain energy {energy:.10e}")
    if case is not None:
        rep = ErrorReport(
            cfg.mesh_file.stem, mesh.n_cells, mesh.h_max,
            error_linf(mesh, sol, case.exact_u),
            error_l2(mesh, sol, case.exact_u, system.projectors),
            error_energy(mesh, sol, case.exact_strain, case.material, system.projectors),
        )
        print(f"errors vs exact: linf {rep.err_linf:.4e} l2 {rep.err_l2:.4e} energy {rep.err_energy:.4e}")
    print(f"wrote {cfg.out / 'solution.txt'} and {cfg.out / 'reactions.txt'}")
    return EXIT_OK


COMMANDS = {"patch": cmd_patch, "eigenscan": cmd_eigenscan, "converge": cmd_converge, "solve": cmd_solve}


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except InputError as exc:
        print(f"sfvem: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return COMMANDS[cfg.command](cfg)
    except (InputError, MeshError, BoundaryConditionError, SelfCheckError, OSError) as exc:
        print(f"sfvem: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"sfvem: solver failure: {exc}", file=sys.stderr)
        return EXIT_DEVIATION


if __name__ == "__main__":
    sys.exit(main())
