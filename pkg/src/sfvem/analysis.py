"""Spurious-mode scans, discrete error norms and convergence-rate fits."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .assembly.element import element_stiffness
from .assembly.material import MaterialModel
from .assembly.system import Solution
from .geometry import central_quad_mesh, polygon_metrics, regular_polygon
from .geometry.mesh import PolyMesh
from .projectors import ProjectorSet, project_displacement, project_strain
from .quadrature import sbc_rule

ZERO_TOL_REL = 1e-9
ERROR_SBC_ORDER = 5
FAMILIES = ("central_quad", "regular_polygon")

# First N_E with a spurious mode, per degree, as reported for each family.
REPORTED_THRESHOLDS = {
    "central_quad": {0: 4, 1: 6, 2: 9, 3: 11},
    "regular_polygon": {0: 4, 1: 5, 2: 7, 3: 9},
}


@dataclass(frozen=True)
class EigenReport:
    n_vertices: int
    ell: int | None
    eigenvalues: np.ndarray
    threshold: float
    element: int | None = None

    @property
    def n_zero(self) -> int:
        return int(np.sum(self.eigenvalues < self.threshold))

    @property
    def spurious(self) -> int:
        return max(0, self.n_zero - 3)


def spurious_mode_count(K: np.ndarray, tol_rel: float = ZERO_TOL_REL, ell: int | None = None, element: int | None = None) -> EigenReport:
    K = np.asarray(K, dtype=float)
    lam = np.linalg.eigvalsh(0.5 * (K + K.T))
    if lam[-1] <= 0.0:
        raise ValueError("element matrix has no positive eigenvalue")
    return EigenReport(K.shape[0] // 2, ell, lam, tol_rel * lam[-1], element)


def family_element(family: str, n_vertices: int):
    if family == "central_quad":
        return central_quad_mesh(n_vertices).geometry(4)
    if family == "regular_polygon":
        return polygon_metrics(regular_polygon(n_vertices))
    raise ValueError(f"unknown element family {family!r}; expected one of {FAMILIES}")


@dataclass
class EigenScan:
    family: str
    rows: list[tuple[int, int, int]]  # (ell, N_E, spurious)

    def thresholds(self) -> dict[int, int | None]:
        """First N_E with spurious > 0, per degree (None if never reached)."""
        out: dict[int, int | None] = {}
        for ell, n, s in sorted(self.rows):
            out.setdefault(ell, None)
            if s > 0 and out[ell] is None:
                out[ell] = n
        return out

    def counts(self, ell: int) -> list[int]:
        return [s for e, _, s in sorted(self.rows) if e == ell]


def eigen_scan(family: str, ells: Iterable[int] = range(4), n_range: Iterable[int] = range(4, 17), material: MaterialModel | None = None, tol_rel: float = ZERO_TOL_REL) -> EigenScan:
    material = material or MaterialModel(1.0, 0.3)
    rows = []
    ells = list(ells)
    for n in n_range:
        geom = family_element(family, n)
        for ell in ells:
            K = element_stiffness(geom, material, ell)
            rows.append((ell, n, spurious_mode_count(K, tol_rel, ell).spurious))
    return EigenScan(family, sorted(rows))


def _cell_dofs(solution: Solution, cell) -> np.ndarray:
    u = solution.displacement[np.asarray(cell)]
    return np.concatenate([u[:, 0], u[:, 1]])


def error_linf(mesh: PolyMesh, solution: Solution, exact_u: Callable) -> float:
    diff = solution.displacement - np.asarray(exact_u(mesh.vertices))
    return float(np.max(np.hypot(diff[:, 0], diff[:, 1])))


def error_l2(mesh: PolyMesh, solution: Solution, exact_u: Callable, projectors: Sequence[ProjectorSet], order: int = ERROR_SBC_ORDER) -> float:
    """sqrt(sum_E int_E |u - Pi u_h|^2) with the scaled boundary cubature."""
    total = 0.0
    for cell, ps in zip(mesh.cells, projectors):
        pts, w = sbc_rule(ps.geometry, order)
        d = np.asarray(exact_u(pts)) - project_displacement(ps, _cell_dofs(solution, cell), pts)
        total += float(w @ (d * d).sum(-1))
    return math.sqrt(max(total, 0.0))


def error_energy(mesh: PolyMesh, solution: Solution, exact_strain: Callable, material: MaterialModel, projectors: Sequence[ProjectorSet], order: int = ERROR_SBC_ORDER) -> float:
    """sqrt(sum_E int_E (eps - Pi_m eps_h)^T C (eps - Pi_m eps_h)), Voigt strains."""
    C = material.C
    total = 0.0
    for cell, ps in zip(mesh.cells, projectors):
        pts, w = sbc_rule(ps.geometry, order)
        d = np.asarray(exact_strain(pts)) - project_strain(ps, _cell_dofs(solution, cell), pts)
        total += float(w @ np.einsum("qi,ij,qj->q", d, C, d))
    return math.sqrt(max(total, 0.0))


@dataclass
class ErrorReport:
    mesh_id: str
    n_cells: int
    h_max: float
    err_linf: float
    err_l2: float
    err_energy: float

    FIELDS = ("mesh_id", "n_cells", "h_max", "err_linf", "err_l2", "err_energy")

    def row(self) -> list:
        return [self.mesh_id, self.n_cells, self.h_max, self.err_linf, self.err_l2, self.err_energy]


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    residual: float
    n_points: int
    excluded: list[int] = field(default_factory=list)


def fit_convergence(h: Sequence[float], err: Sequence[float]) -> SlopeFit:
    """Least-squares slope of log(err) against log(h).

    Nonpositive errors are dropped (their indices are kept in ``excluded``);
    at least three points must remain.
    """
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if h.shape != err.shape:
        raise ValueError("h and err must have the same length")
    keep = err > 0
    excluded = np.flatnonzero(~keep).tolist()
    if keep.sum() < 3:
        raise ValueError(f"need at least 3 positive errors to fit a rate, got {int(keep.sum())}")
    x, y = np.log(h[keep]), np.log(err[keep])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), res, *_ = np.linalg.lstsq(A, y, rcond=None)
    residual = float(np.sqrt(res[0] / len(x))) if res.size else 0.0
    return SlopeFit(float(slope), float(intercept), residual, int(keep.sum()), excluded)


def fit_reports(reports: Sequence[ErrorReport]) -> dict[str, SlopeFit]:
    if len(reports) < 3:
        raise ValueError("slope fit needs at least 3 meshes")
    h = [r.h_max for r in reports]
    if np.any(np.diff(h) >= 0):
        raise ValueError("mesh sizes h must be strictly decreasing")
    return {
        "l2": fit_convergence(h, [r.err_l2 for r in reports]),
        "energy": fit_convergence(h, [r.err_energy for r in reports]),
    }


def write_error_csv(stream, reports: Sequence[ErrorReport]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(ErrorReport.FIELDS)
    for r in reports:
        w.writerow([r.mesh_id, r.n_cells] + [repr(float(v)) for v in (r.h_max, r.err_linf, r.err_l2, r.err_energy)])


def write_error_dat(stream, reports: Sequence[ErrorReport], title: str = "") -> None:
    """Whitespace-separated columns readable by gnuplot."""
    if title:
        stream.write(f"# {title}\n")
    stream.write("# " + " ".join(ErrorReport.FIELDS[1:]) + "\n")
    for r in reports:
        stream.write(f"{r.n_cells} {r.h_max:.10e} {r.err_linf:.10e} {r.err_l2:.10e} {r.err_energy:.10e}\n")


def write_eigen_csv(stream, scans: Sequence[EigenScan]) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["family", "ell", "NE", "spurious"])
    for scan in scans:
        for ell, n, s in scan.rows:
            w.writerow([scan.family, ell, n, s])


def reports_to_csv(reports: Sequence[ErrorReport]) -> str:
    buf = io.StringIO()
    write_error_csv(buf, reports)
    return buf.getvalue()
