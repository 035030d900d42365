"""Global assembly, Dirichlet elimination and the linear solve.

Global DOFs are interleaved, ``2 * vertex + component``.  Element matrices
use block order (all x, then all y) and are permuted on scatter.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..geometry.mesh import PolyMesh
from ..polyspace import DegreePolicy
from ..projectors import ProjectorSet, build_projectors
from .element import element_force, element_stiffness_stabilized, element_with_policy
from .material import MaterialModel

DIRECT_SOLVE_LIMIT = 200_000
CG_RTOL = 1e-12
CORNER_TOL = 1e-12


class BoundaryConditionError(ValueError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Dirichlet:
    """Prescribed displacement on a marker.

    ``value`` is a constant 2-vector or a callable mapping points ``(..., 2)``
    to displacements ``(..., 2)``.  ``components`` masks which of (ux, uy)
    are prescribed; the free component is traction-free.
    """

    value: object = (0.0, 0.0)
    components: tuple[bool, bool] = (True, True)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if callable(self.value):
            return np.asarray(self.value(x), dtype=float).reshape(len(x), 2)
        return np.broadcast_to(np.asarray(self.value, dtype=float), (len(x), 2)).copy()


@dataclass
class ProblemDefinition:
    """Boundary value problem on a marked mesh.

    ``traction`` values are constant 2-vectors or callables ``t(x, n)``.
    ``pinned`` lists ``(vertex, component, value)`` constraints used when
    the Dirichlet markers alone do not remove the rigid modes.
    """

    mesh: PolyMesh
    material: MaterialModel
    body_force: Callable | None = None
    dirichlet: Mapping[str, Dirichlet] = field(default_factory=dict)
    traction: Mapping[str, object] = field(default_factory=dict)
    pinned: Sequence[tuple[int, int, float]] = ()
    marker_priority: Sequence[str] = ()
    exact_displacement: Callable | None = None
    exact_stress: Callable | None = None

    def check(self) -> None:
        both = set(self.dirichlet) & set(self.traction)
        if both:
            raise BoundaryConditionError(f"markers carry both Dirichlet and traction data: {sorted(both)}")
        known = set(self.dirichlet) | set(self.traction)
        for i, j, marker in self.mesh.boundary_edges:
            if marker not in known:
                raise BoundaryConditionError(f"boundary edge ({i}, {j}) with marker {marker!r} has no condition")
        if not self.dirichlet and len(self.pinned) < 3:
            raise BoundaryConditionError("no Dirichlet markers and fewer than 3 pinned DOFs: rigid modes are free")


@dataclass
class GlobalSystem:
    K: sp.csr_matrix
    F: np.ndarray
    problem: ProblemDefinition
    ells: np.ndarray
    projectors: list[ProjectorSet] = field(repr=False)

    @property
    def n_dofs(self) -> int:
        return self.K.shape[0]


@dataclass
class ConstrainedSystem:
    K_ff: sp.csr_matrix
    F_f: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    system: GlobalSystem

    def expand(self, u_free: np.ndarray) -> np.ndarray:
        u = np.zeros(self.system.n_dofs)
        u[self.free] = u_free
        u[self.fixed] = self.fixed_values
        return u

    def reactions(self, u: np.ndarray) -> np.ndarray:
        """Reaction forces at the fixed DOFs, K u - F restricted to them."""
        r = self.system.K @ u - self.system.F
        return r[self.fixed]


@dataclass
class Solution:
    displacement: np.ndarray
    reactions: dict[int, np.ndarray]
    constrained: ConstrainedSystem = field(repr=False)

    @property
    def vector(self) -> np.ndarray:
        return self.displacement.reshape(-1)


def local_to_global(cell: Sequence[int]) -> np.ndarray:
    c = np.asarray(cell, dtype=np.int64)
    return np.concatenate([2 * c, 2 * c + 1])


def n_threads() -> int:
    raw = os.environ.get("SFVEM_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _traction_edges(mesh: PolyMesh, traction: Mapping[str, object]):
    """Map each cell to its list of (local edge, traction)."""
    markers = {(i, j): m for i, j, m in mesh.boundary_edges}
    out: dict[int, list] = {}
    for c, cell in enumerate(mesh.cells):
        N = len(cell)
        for k in range(N):
            m = markers.get((cell[k], cell[(k + 1) % N]))
            if m is not None and m in traction:
                out.setdefault(c, []).append((k, traction[m]))
    return out


def assemble_global(problem: ProblemDefinition, policy: DegreePolicy = DegreePolicy(), stabilized: bool = False, threads: int | None = None) -> GlobalSystem:
    """Scatter element stiffness and load into the global sparse system.

    Elements are computed independently (optionally on a thread pool) and
    reduced in cell order, so the result does not depend on ``threads``.
    """
    problem.check()
    mesh = problem.mesh
    mat = problem.material
    tractions = _traction_edges(mesh, problem.traction)

    def work(c):
        geom = mesh.geometry(c)
        if stabilized:
            K = element_stiffness_stabilized(geom, mat)
            ps = build_projectors(geom, mat.C, 0)
        else:
            K, ps = element_with_policy(geom, mat, policy)
        F = element_force(geom, problem.body_force, tractions.get(c, ()))
        return K, F, ps

    threads = n_threads() if threads is None else threads
    cells = range(mesh.n_cells)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, cells))
    else:
        results = [work(c) for c in cells]

    n = 2 * mesh.n_vertices
    rows, cols, vals = [], [], []
    F = np.zeros(n)
    for cell, (Ke, Fe, _) in zip(mesh.cells, results):
        dofs = local_to_global(cell)
        rows.append(np.repeat(dofs, len(dofs)))
        cols.append(np.tile(dofs, len(dofs)))
        vals.append(Ke.ravel())
        np.add.at(F, dofs, Fe)
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsr()
    K.sum_duplicates()
    ells = np.array([r[2].ell for r in results], dtype=int)
    return GlobalSystem(K, F, problem, ells, [r[2] for r in results])


def dirichlet_values(problem: ProblemDefinition) -> dict[int, float]:
    """Prescribed value per global DOF, with corner conflicts resolved."""
    mesh = problem.mesh
    priority = {m: k for k, m in enumerate(problem.marker_priority)}
    chosen: dict[int, tuple[float, str]] = {}
    for marker, bc in problem.dirichlet.items():
        verts = np.unique(mesh.marker_vertices(marker)).astype(int)
        if verts.size == 0:
            continue
        vals = bc.evaluate(mesh.vertices[verts])
        for v, val in zip(verts, vals):
            for comp in (0, 1):
                if not bc.components[comp]:
                    continue
                dof = 2 * int(v) + comp
                new = float(val[comp])
                if dof not in chosen:
                    chosen[dof] = (new, marker)
                    continue
                old, old_marker = chosen[dof]
                scale = max(1.0, abs(old), abs(new))
                if abs(old - new) <= CORNER_TOL * scale:
                    continue
                if marker in priority and old_marker in priority:
                    if priority[marker] < priority[old_marker]:
                        chosen[dof] = (new, marker)
                    continue
                raise BoundaryConditionError(
                    f"vertex {v} component {comp}: markers {old_marker!r} and {marker!r} prescribe "
                    f"{old!r} and {new!r}; supply a marker priority"
                )
    out = {dof: val for dof, (val, _) in chosen.items()}
    for v, comp, val in problem.pinned:
        out[2 * int(v) + int(comp)] = float(val)
    return out


def apply_dirichlet(system: GlobalSystem) -> ConstrainedSystem:
    """Symmetric elimination of the prescribed DOFs."""
    values = dirichlet_values(system.problem)
    fixed = np.array(sorted(values), dtype=np.int64)
    fixed_values = np.array([values[d] for d in fixed])
    mask = np.ones(system.n_dofs, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    K = system.K
    K_ff = K[free][:, free].tocsr()
    F_f = system.F[free] - K[free][:, fixed] @ fixed_values
    return ConstrainedSystem(K_ff, F_f, free, fixed, fixed_values, system)


def _smallest_eigenvalue(K: sp.spmatrix) -> float:
    if K.shape[0] <= 2000:
        return float(np.linalg.eigvalsh(K.toarray())[0])
    try:
        return float(spla.eigsh(K, k=1, which="SA", return_eigenvectors=False, maxiter=5000)[0])
    except spla.ArpackNoConvergence:
        return float("nan")


def _spd_failure(K, reason: str) -> SolverError:
    lam = _smallest_eigenvalue(K)
    return SolverError(
        f"constrained stiffness is not SPD ({reason}); smallest eigenvalue estimate {lam:.3e}. "
        "Check for spurious element modes or missing constraints."
    )


def solve_linear(K: sp.csr_matrix, F: np.ndarray) -> np.ndarray:
    n = K.shape[0]
    if n == 0:
        return np.zeros(0)
    d = K.diagonal()
    if np.any(d <= 0):
        raise _spd_failure(K, "nonpositive diagonal")
    if n < DIRECT_SOLVE_LIMIT:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                u = spla.spsolve(K.tocsc(), F)
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise _spd_failure(K, f"factorization failed: {exc}") from None
    else:
        M = sp.diags(1.0 / d)
        u, info = spla.cg(K, F, rtol=CG_RTOL, atol=0.0, M=M, maxiter=20 * n)
        if info != 0:
            raise _spd_failure(K, f"CG did not converge (info={info})")
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise _spd_failure(K, "non-finite solution")
    scale = np.linalg.norm(F)
    if scale > 0:
        if float(u @ (K @ u)) <= 0.0:
            raise _spd_failure(K, "nonpositive energy")
        res = np.linalg.norm(K @ u - F) / scale
        if res > 1e-8:
            raise _spd_failure(K, f"relative residual {res:.2e}")
    return u


def solve(system: GlobalSystem | ConstrainedSystem) -> Solution:
    """Constrain (if needed) and solve; returns nodal displacements and reactions."""
    cs = system if isinstance(system, ConstrainedSystem) else apply_dirichlet(system)
    u = cs.expand(solve_linear(cs.K_ff, cs.F_f))
    r = cs.reactions(u)
    reactions: dict[int, np.ndarray] = {}
    for dof, val in zip(cs.fixed, r):
        reactions.setdefault(int(dof) // 2, np.zeros(2))[int(dof) % 2] = val
    return Solution(u.reshape(-1, 2), reactions, cs)


def write_solution(path, solution: Solution) -> None:
    with open(path, "w") as fh:
        fh.write("sfvem-solution 1\n")
        for v, (ux, uy) in enumerate(solution.displacement):
            fh.write(f"{v} {float(ux)!r} {float(uy)!r}\n")


def write_reactions(path, solution: Solution) -> None:
    with open(path, "w") as fh:
        fh.write("sfvem-reactions 1\n")
        for v in sorted(solution.reactions):
            rx, ry = solution.reactions[v]
            fh.write(f"{v} {float(rx)!r} {float(ry)!r}\n")


def read_solution(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "sfvem-solution 1":
            raise ValueError(f"{path}: expected header 'sfvem-solution 1', got {header!r}")
        rows = [line.split() for line in fh if line.strip()]
    out = np.zeros((len(rows), 2))
    for k, row in enumerate(rows):
        out[int(row[0])] = float(row[1]), float(row[2])
    return out
