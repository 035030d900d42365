"""Analytic benchmark problems and the convergence-study driver.

Every case bundles a domain, a mesh recipe, the material, boundary data and
the exact displacement/stress fields.  Exact fields are self-checked
(equilibrium, stress-displacement consistency, boundary data) when a case is
built, before anything is solved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .analysis import ErrorReport, SlopeFit, error_energy, error_l2, error_linf, fit_reports
from .assembly import Dirichlet, MaterialModel, ProblemDefinition, assemble_global, solve
from .geometry import (
    Annulus,
    PolyMesh,
    QuarterPlateWithHole,
    Rectangle,
    generate_structured_quads,
    generate_voronoi_lloyd,
    split_quads_nonconvex,
)
from .geometry.domains import DomainSDF
from .polyspace import DegreePolicy

DEFAULT_LLOYD = 100
FD_STEP = 1e-5
SELF_CHECK_TOL = 1e-6


class SelfCheckError(AssertionError):
    pass


def stress_traction(stress: Callable) -> Callable:
    """Traction callable t(x, n) = sigma(x) n from a Voigt stress field."""

    def t(x, n):
        s = stress(x)
        return np.stack([s[..., 0] * n[..., 0] + s[..., 2] * n[..., 1], s[..., 2] * n[..., 0] + s[..., 1] * n[..., 1]], -1)

    return t


def pressure_traction(p: float) -> Callable:
    """Uniform pressure: t = -p n with n the outward normal of the body."""

    def t(x, n):
        return -p * np.asarray(n, dtype=float)

    return t


@dataclass
class BenchmarkCase:
    name: str
    domain: DomainSDF
    material: MaterialModel
    exact_u: Callable
    exact_stress: Callable
    sizes: tuple[int, ...]
    mesh_recipe: Callable[[int, int, int], PolyMesh]
    dirichlet: dict = field(default_factory=dict)
    traction: dict = field(default_factory=dict)
    body_force: Callable | None = None
    pins: Callable[[PolyMesh], list] | None = None
    marker_priority: tuple[str, ...] = ()
    expected_slopes: tuple[float, float] = (2.0, 1.0)
    policy: DegreePolicy = field(default_factory=DegreePolicy)
    boundary_checks: list[tuple[str, Callable[[], float]]] = field(default_factory=list)

    def exact_strain(self, x) -> np.ndarray:
        return self.material.strain(self.exact_stress(x))

    def mesh(self, n_cells: int, n_lloyd: int = DEFAULT_LLOYD, seed: int = 0) -> PolyMesh:
        return self.mesh_recipe(n_cells, n_lloyd, seed)

    def problem(self, mesh: PolyMesh) -> ProblemDefinition:
        pinned = self.pins(mesh) if self.pins else ()
        return ProblemDefinition(
            mesh,
            self.material,
            body_force=self.body_force,
            dirichlet=dict(self.dirichlet),
            traction=dict(self.traction),
            pinned=pinned,
            marker_priority=self.marker_priority,
            exact_displacement=self.exact_u,
            exact_stress=self.exact_stress,
        )

    def sample_interior(self, n: int = 100, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        x0, x1, y0, y1 = self.domain.bbox
        out = np.empty((0, 2))
        while len(out) < n:
            p = rng.uniform([x0, y0], [x1, y1], size=(4 * n, 2))
            # keep clear of the boundary so central differences stay inside
            p = p[self.domain.sdf(p) < -10 * FD_STEP]
            out = np.vstack([out, p])
        return out[:n]

    def equilibrium_residual(self, n: int = 100, seed: int = 0) -> float:
        """max |div sigma + f| / max |sigma| at random interior points."""
        x = self.sample_interior(n, seed)
        h = FD_STEP
        ex, ey = np.array([h, 0.0]), np.array([0.0, h])
        dsx = (self.exact_stress(x + ex) - self.exact_stress(x - ex)) / (2 * h)
        dsy = (self.exact_stress(x + ey) - self.exact_stress(x - ey)) / (2 * h)
        div = np.column_stack([dsx[:, 0] + dsy[:, 2], dsx[:, 2] + dsy[:, 1]])
        if self.body_force is not None:
            div = div + np.asarray(self.body_force(x))
        scale = np.abs(self.exact_stress(x)).max()
        return float(np.abs(div).max() / scale)

    def compatibility_residual(self, n: int = 100, seed: int = 1) -> float:
        """max |eps(u) - C^-1 sigma| / max |C^-1 sigma| using central differences of u."""
        x = self.sample_interior(n, seed)
        h = FD_STEP
        ex, ey = np.array([h, 0.0]), np.array([0.0, h])
        dux = (self.exact_u(x + ex) - self.exact_u(x - ex)) / (2 * h)
        duy = (self.exact_u(x + ey) - self.exact_u(x - ey)) / (2 * h)
        eps = np.column_stack([dux[:, 0], duy[:, 1], dux[:, 1] + duy[:, 0]])
        ref = self.exact_strain(x)
        return float(np.abs(eps - ref).max() / np.abs(ref).max())

    def self_check(self, tol: float = SELF_CHECK_TOL) -> dict[str, float]:
        checks = {
            "equilibrium": self.equilibrium_residual(),
            "compatibility": self.compatibility_residual(),
        }
        for label, fn in self.boundary_checks:
            checks[label] = fn()
        bad = {k: v for k, v in checks.items() if not v <= tol}
        if bad:
            raise SelfCheckError(f"{self.name}: exact fields fail self-check {bad}")
        return checks


def _lloyd_recipe(domain: DomainSDF):
    def recipe(n_cells, n_lloyd, seed):
        return generate_voronoi_lloyd(domain, n_cells, n_lloyd=n_lloyd, seed=seed)

    return recipe


# ----------------------------------------------------------------- patch


def case_patch() -> BenchmarkCase:
    domain = Rectangle(0.0, 1.0, 0.0, 1.0)
    mat = MaterialModel(1.0, 0.25, "plane_stress")

    def u(x):
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 0], x[..., 0] + x[..., 1]], -1)

    C = mat.C
    eps = np.array([1.0, 1.0, 1.0])

    def sigma(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(C @ eps, x.shape[:-1] + (3,)).copy()

    def recipe(n_cells, n_lloyd, seed):
        if n_lloyd < 0:
            side = int(round(math.sqrt(n_cells)))
            return generate_structured_quads((0.0, 1.0, 0.0, 1.0), side, side)
        return generate_voronoi_lloyd(domain, n_cells, n_lloyd=n_lloyd, seed=seed)

    bc = Dirichlet(u)
    return BenchmarkCase(
        "patch",
        domain,
        mat,
        u,
        sigma,
        sizes=(16,),
        mesh_recipe=recipe,
        dirichlet={m: bc for m in ("bottom", "right", "top", "left")},
        expected_slopes=(float("nan"), float("nan")),
    )


def patch_meshes(seed: int = 0, n_lloyd: int = 3) -> dict[str, PolyMesh]:
    """The three 16-cell meshes of the patch test: uniform, random, Lloyd."""
    domain = Rectangle(0.0, 1.0, 0.0, 1.0)
    return {
        "uniform": generate_structured_quads((0.0, 1.0, 0.0, 1.0), 4, 4),
        "random": generate_voronoi_lloyd(domain, 16, n_lloyd=0, seed=seed),
        "lloyd": generate_voronoi_lloyd(domain, 16, n_lloyd=n_lloyd, seed=seed),
    }


# ------------------------------------------------------------- cantilever

BEAM_LENGTH = 8.0
BEAM_DEPTH = 1.0
BEAM_LOAD = -1000.0


def timoshenko_beam(E: float, nu: float, P: float = BEAM_LOAD, L: float = BEAM_LENGTH, D: float = BEAM_DEPTH):
    """Cantilever with an end shear load P, clamped at x=0, y in [-D/2, D/2]."""
    I = D**3 / 12.0

    def u(x):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        ux = -P * Y / (6 * E * I) * ((6 * L - 3 * X) * X + (2 + nu) * (Y**2 - D**2 / 4))
        uy = P / (6 * E * I) * (3 * nu * Y**2 * (L - X) + (4 + 5 * nu) * D**2 * X / 4 + (3 * L - X) * X**2)
        return np.stack([ux, uy], -1)

    def sigma(x):
        x = np.asarray(x, dtype=float)
        X, Y = x[..., 0], x[..., 1]
        sxx = -P * (L - X) * Y / I
        sxy = P / (2 * I) * (D**2 / 4 - Y**2)
        return np.stack([sxx, np.zeros_like(sxx), sxy], -1)

    return u, sigma


def _beam_common(name, sizes, recipe):
    L, D = BEAM_LENGTH, BEAM_DEPTH
    mat = MaterialModel(2.0e5, 0.3, "plane_stress")
    u, sigma = timoshenko_beam(mat.E, mat.nu)
    t = stress_traction(sigma)
    domain = Rectangle(0.0, L, -D / 2, D / 2)
    case = BenchmarkCase(
        name,
        domain,
        mat,
        u,
        sigma,
        sizes=sizes,
        mesh_recipe=recipe,
        dirichlet={"left": Dirichlet(u)},
        traction={"right": t, "top": t, "bottom": t},
    )

    def free_faces():
        s = np.linspace(0.0, L, 41)
        top = sigma(np.column_stack([s, np.full_like(s, D / 2)]))
        bot = sigma(np.column_stack([s, np.full_like(s, -D / 2)]))
        return float(np.abs(np.concatenate([top[:, 1:], bot[:, 1:]])).max() / abs(P_scale(sigma)))

    def end_resultant():
        g, w = np.polynomial.legendre.leggauss(8)
        y = 0.5 * D * g
        shear = sigma(np.column_stack([np.full_like(y, L), y]))[:, 2]
        return abs(0.5 * D * float(w @ shear) - BEAM_LOAD) / abs(BEAM_LOAD)

    def P_scale(s):
        return np.abs(s(np.array([[0.0, D / 2]]))).max()

    case.boundary_checks = [("free faces", free_faces), ("end resultant", end_resultant)]
    return case


def case_cantilever(sizes=(150, 350, 800, 1600, 3500)) -> BenchmarkCase:
    domain = Rectangle(0.0, BEAM_LENGTH, -BEAM_DEPTH / 2, BEAM_DEPTH / 2)
    return _beam_common("beam", tuple(sizes), _lloyd_recipe(domain))


def case_cantilever_nonconvex(sizes=(64, 256, 1024)) -> BenchmarkCase:
    """Same beam on quads split into two nonconvex heptagons each."""

    def recipe(n_cells, n_lloyd, seed):
        n_quads = n_cells // 2
        ny = max(1, int(round(math.sqrt(n_quads / 8.0))))
        nx = n_quads // ny
        if 2 * nx * ny != n_cells:
            raise ValueError(f"nonconvex beam meshes need n_cells = 16 k^2, got {n_cells}")
        quads = generate_structured_quads((0.0, BEAM_LENGTH, -BEAM_DEPTH / 2, BEAM_DEPTH / 2), nx, ny)
        return split_quads_nonconvex(quads)

    case = _beam_common("beam-nonconvex", tuple(sizes), recipe)
    # The SF energy grows with l, so the smallest rank-safe degree is the
    # least stiff; on these heptagons that is l=2, not the strict l=3.
    case.policy = DegreePolicy("paper_sufficient")
    return case


# ------------------------------------------------------- plate with hole


def kirsch(E: float, nu: float, sigma0: float = 1.0, a: float = 1.0, hypothesis: str = "plane_strain"):
    """Infinite plate with a circular hole of radius a, tension sigma0 along x."""
    mu = E / (2 * (1 + nu))
    kappa = 3 - 4 * nu if hypothesis == "plane_strain" else (3 - nu) / (1 + nu)

    def polar(x):
        x = np.asarray(x, dtype=float)
        return np.hypot(x[..., 0], x[..., 1]), np.arctan2(x[..., 1], x[..., 0])

    def u(x):
        r, th = polar(x)
        f = a * sigma0 / (8 * mu)
        ux = f * (r / a * (kappa + 1) * np.cos(th) + 2 * a / r * ((1 + kappa) * np.cos(th) + np.cos(3 * th)) - 2 * a**3 / r**3 * np.cos(3 * th))
        uy = f * (r / a * (kappa - 3) * np.sin(th) + 2 * a / r * ((1 - kappa) * np.sin(th) + np.sin(3 * th)) - 2 * a**3 / r**3 * np.sin(3 * th))
        return np.stack([ux, uy], -1)

    def sigma(x):
        r, th = polar(x)
        q2, q4 = a**2 / r**2, a**4 / r**4
        c2, c4, s2, s4 = np.cos(2 * th), np.cos(4 * th), np.sin(2 * th), np.sin(4 * th)
        sxx = sigma0 * (1 - q2 * (1.5 * c2 + c4) + 1.5 * q4 * c4)
        syy = sigma0 * (-q2 * (0.5 * c2 - c4) - 1.5 * q4 * c4)
        sxy = sigma0 * (-q2 * (0.5 * s2 + s4) + 1.5 * q4 * s4)
        return np.stack([sxx, syy, sxy], -1)

    return u, sigma


def case_plate_hole(sizes=(250, 500, 1000, 2000, 4000, 6000), hole_traction: str = "free") -> BenchmarkCase:
    """Quarter plate, symmetry on the cut edges, exact traction on the outer edges.

    ``hole_traction="free"`` leaves the hole chords unloaded (the physical
    condition); ``"exact"`` applies sigma n of the analytic field on them.
    """
    domain = QuarterPlateWithHole(length=5.0, radius=1.0)
    mat = MaterialModel(2.0e7, 0.3, "plane_strain")
    u, sigma = kirsch(mat.E, mat.nu, 1.0, domain.radius)
    t = stress_traction(sigma)
    if hole_traction not in ("free", "exact"):
        raise ValueError("hole_traction must be 'free' or 'exact'")
    case = BenchmarkCase(
        "plate-hole",
        domain,
        mat,
        u,
        sigma,
        sizes=tuple(sizes),
        mesh_recipe=_lloyd_recipe(domain),
        dirichlet={"left": Dirichlet(0.0, (True, False)), "bottom": Dirichlet(0.0, (False, True))},
        traction={"right": t, "top": t, "hole": t if hole_traction == "exact" else (0.0, 0.0)},
    )

    def hole_free():
        th = np.linspace(0.0, np.pi / 2, 33)
        n = -np.column_stack([np.cos(th), np.sin(th)])
        x = domain.radius * -n
        return float(np.abs(t(x, n)).max())

    def symmetry():
        s = np.linspace(domain.radius, domain.length, 33)
        left = np.column_stack([np.zeros_like(s), s])
        bottom = np.column_stack([s, np.zeros_like(s)])
        return float(max(np.abs(u(left)[:, 0]).max(), np.abs(u(bottom)[:, 1]).max(), np.abs(sigma(left)[:, 2]).max(), np.abs(sigma(bottom)[:, 2]).max()))

    case.boundary_checks = [("hole traction", hole_free), ("symmetry", symmetry)]
    return case


# -------------------------------------------------------------- cylinder

CYLINDER_E = 2.0e7
CYLINDER_NU = 0.3


def lame_cylinder(E: float, nu: float, p: float, a: float, b: float):
    """Thick cylinder, internal pressure p, plane strain."""
    k = p * a**2 / (b**2 - a**2)

    def u(x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        ur = (1 + nu) * k / E * ((1 - 2 * nu) * r + b**2 / r)
        return x * (ur / r)[..., None]

    def sigma(x):
        x = np.asarray(x, dtype=float)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        srr = k * (1 - b**2 / r2)
        stt = k * (1 + b**2 / r2)
        c2 = x[..., 0] ** 2 / r2
        s2 = x[..., 1] ** 2 / r2
        cs = x[..., 0] * x[..., 1] / r2
        return np.stack([srr * c2 + stt * s2, srr * s2 + stt * c2, (srr - stt) * cs], -1)

    return u, sigma


def case_cylinder(sizes=(250, 500, 1000, 2000, 4000, 6000), quarter: bool = False, p: float = 1.0e5) -> BenchmarkCase:
    """Pressurized thick cylinder.

    The full annulus removes its rigid modes with three pinned DOFs at the
    vertices nearest (b, 0) (both components) and (-b, 0) (y only), set to
    the analytic values.  ``quarter=True`` uses symmetry edges instead.
    """
    domain = Annulus(inner=1.0, outer=5.0, quarter=quarter)
    a, b = domain.inner, domain.outer
    mat = MaterialModel(CYLINDER_E, CYLINDER_NU, "plane_strain")
    u, sigma = lame_cylinder(mat.E, mat.nu, p, a, b)
    traction = {"inner": pressure_traction(p), "outer": (0.0, 0.0)}
    dirichlet = {}
    pins = None
    if quarter:
        dirichlet = {"left": Dirichlet(0.0, (True, False)), "bottom": Dirichlet(0.0, (False, True))}
    else:

        def pins(mesh):
            i = int(np.argmin(np.hypot(*(mesh.vertices - [b, 0.0]).T)))
            j = int(np.argmin(np.hypot(*(mesh.vertices - [-b, 0.0]).T)))
            ui, uj = u(mesh.vertices[i]), u(mesh.vertices[j])
            return [(i, 0, float(ui[0])), (i, 1, float(ui[1])), (j, 1, float(uj[1]))]

    case = BenchmarkCase(
        "cylinder",
        domain,
        mat,
        u,
        sigma,
        sizes=tuple(sizes),
        mesh_recipe=_lloyd_recipe(domain),
        dirichlet=dirichlet,
        traction=traction,
        pins=pins,
    )

    def radial():
        th = np.linspace(0.0, 2 * np.pi, 37)
        e = np.column_stack([np.cos(th), np.sin(th)])
        t_in = stress_traction(sigma)(a * e, -e)
        t_out = stress_traction(sigma)(b * e, e)
        return float(max(np.abs(t_in - p * e).max(), np.abs(t_out).max()) / p)

    case.boundary_checks = [("radial tractions", radial)]
    return case


CASES: dict[str, Callable[[], BenchmarkCase]] = {
    "patch": case_patch,
    "beam": case_cantilever,
    "beam-nonconvex": case_cantilever_nonconvex,
    "plate-hole": case_plate_hole,
    "cylinder": case_cylinder,
}


def get_case(name: str, **kwargs) -> BenchmarkCase:
    try:
        factory = CASES[name]
    except KeyError:
        raise KeyError(f"unknown case {name!r}; available: {', '.join(CASES)}") from None
    case = factory(**kwargs)
    case.self_check()
    return case


# ---------------------------------------------------------------- driver


def run_mesh(case: BenchmarkCase, mesh: PolyMesh, mesh_id: str = "", policy: DegreePolicy | None = None, stabilized: bool = False, threads: int | None = None):
    """Assemble, solve and measure errors on one mesh; returns (ErrorReport, Solution, GlobalSystem)."""
    system = assemble_global(case.problem(mesh), policy=policy or case.policy, stabilized=stabilized, threads=threads)
    sol = solve(system)
    report = ErrorReport(
        mesh_id or f"{case.name}-{mesh.n_cells}",
        mesh.n_cells,
        mesh.h_max,
        error_linf(mesh, sol, case.exact_u),
        error_l2(mesh, sol, case.exact_u, system.projectors),
        error_energy(mesh, sol, case.exact_strain, case.material, system.projectors),
    )
    return report, sol, system


@dataclass
class StudyResult:
    case: str
    method: str
    reports: list[ErrorReport]
    slopes: dict[str, SlopeFit]


def convergence_study(case: BenchmarkCase, sizes=None, n_lloyd: int = DEFAULT_LLOYD, seed: int = 0, policy: DegreePolicy | None = None, stabilized: bool = False, meshes: list[PolyMesh] | None = None, threads: int | None = None) -> StudyResult:
    sizes = tuple(sizes or case.sizes)
    if meshes is None:
        meshes = [case.mesh(n, n_lloyd, seed) for n in sizes]
    reports = []
    for n, mesh in zip(sizes, meshes):
        rep, _, _ = run_mesh(case, mesh, f"{case.name}-{n}", policy, stabilized, threads)
        reports.append(rep)
    return StudyResult(case.name, "stabilized" if stabilized else "sf", reports, fit_reports(reports))


@lru_cache(maxsize=32)
def cached_mesh(name: str, n_cells: int, n_lloyd: int, seed: int) -> PolyMesh:
    return CASES[name]().mesh(n_cells, n_lloyd, seed)
