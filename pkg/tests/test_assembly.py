import numpy as np
import pytest
import scipy.sparse as sp

from sfvem.assembly import (
    BoundaryConditionError,
    Dirichlet,
    MaterialModel,
    ProblemDefinition,
    RankDeficiencyError,
    SolverError,
    apply_dirichlet,
    assemble_global,
    count_small_eigenvalues,
    edge_traction,
    element_body_force,
    element_force,
    element_stiffness,
    element_stiffness_stabilized,
    element_with_policy,
    local_to_global,
    material_matrix,
    read_solution,
    solve,
    solve_linear,
    write_reactions,
    write_solution,
)
from sfvem.geometry import (
    Rectangle,
    generate_structured_quads,
    generate_voronoi_lloyd,
    polygon_metrics,
    regular_polygon,
    single_cell_mesh,
    split_quads_nonconvex,
)
from sfvem.polyspace import DegreePolicy, VectorLinearBasis
from sfvem.projectors import dofs_from_field

from conftest import random_convex_polygon

MAT = MaterialModel(2e5, 0.3)
AFFINE = lambda x: np.column_stack([x[:, 0], x[:, 0] + x[:, 1]])


def test_material_matrix_examples():
    np.testing.assert_array_equal(material_matrix(1, 0, "plane_stress"), np.diag([1, 1, 0.5]))
    np.testing.assert_array_equal(material_matrix(1, 0, "plane_strain"), np.diag([1, 1, 0.5]))
    assert material_matrix(2e5, 0.3)[0, 0] == pytest.approx(2e5 / 0.91, rel=1e-15)


def test_material_matrix_against_compliance():
    # plane stress: invert the textbook compliance matrix
    E, nu = 3.0, 0.27
    S = np.array([[1, -nu, 0], [-nu, 1, 0], [0, 0, 2 * (1 + nu)]]) / E
    np.testing.assert_allclose(material_matrix(E, nu), np.linalg.inv(S), rtol=1e-14)
    # plane strain: lambda / mu form
    lam, mu = E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))
    ref = np.array([[lam + 2 * mu, lam, 0], [lam, lam + 2 * mu, 0], [0, 0, mu]])
    np.testing.assert_allclose(material_matrix(E, nu, "plane_strain"), ref, rtol=1e-14)


@pytest.mark.parametrize("args", [(1, 0.5, "plane_strain"), (0, 0.3, "plane_stress"), (1, 1.0, "plane_stress"), (1, 0.3, "axisym")])
def test_material_rejects_inadmissible(args):
    with pytest.raises(ValueError):
        material_matrix(*args)


def test_material_model_stress_strain_roundtrip():
    m = MaterialModel(7.0, 0.2, "plane_strain")
    eps = np.array([[1e-3, -2e-3, 5e-4]])
    np.testing.assert_allclose(m.strain(m.stress(eps)), eps, rtol=1e-13)
    assert m.shear_modulus == pytest.approx(7.0 / 2.4)
    with pytest.raises(ValueError):
        m.C[0, 0] = 1.0


def test_unit_square_rank():
    g = polygon_metrics([(0, 0), (1, 0), (1, 1), (0, 1)])
    K = element_stiffness(g, MaterialModel(1.0, 0.0), 1)
    lam = np.linalg.eigvalsh(K)
    assert np.sum(lam < 1e-9 * lam[-1]) == 3
    assert np.all(lam[3:] > 1e-9 * lam[-1])


def test_element_kernel_and_constant_strain_energy(rng):
    for n in (3, 4, 5, 7, 9):
        g = polygon_metrics(random_convex_polygon(rng, n))
        K, _ = element_with_policy(g, MAT)
        assert np.abs(K - K.T).max() <= 1e-12 * np.abs(K).max()
        rigid = VectorLinearBasis(g).at_vertices()[:, :3]
        assert np.abs(K @ rigid).max() <= 1e-10 * np.abs(K).max()
        A = np.array([[0.3, -0.1], [0.4, 0.2]])
        d = dofs_from_field(g, lambda x: x @ A.T)
        eps = np.array([A[0, 0], A[1, 1], A[0, 1] + A[1, 0]])
        energy = g.area * eps @ MAT.C @ eps
        assert d @ K @ d == pytest.approx(energy, rel=1e-10)
        Ks = element_stiffness_stabilized(g, MAT)
        assert d @ Ks @ d == pytest.approx(d @ K @ d, rel=1e-10)
        assert count_small_eigenvalues(Ks) == 3


def test_policy_degrees_on_regular_heptagon():
    g = polygon_metrics(regular_polygon(7))
    K, ps = element_with_policy(g, MAT, DegreePolicy("verified"))
    assert ps.ell == 3 and count_small_eigenvalues(K) == 3
    K2, ps2 = element_with_policy(g, MAT, DegreePolicy("paper_sufficient"))
    assert ps2.ell == 2 and count_small_eigenvalues(K2) == 3
    K0, _ = element_with_policy(g, MAT, DegreePolicy(fixed=0))
    assert count_small_eigenvalues(K0) > 3
    with pytest.raises(ValueError):
        element_stiffness(g, MAT, 1, projectors=ps)


def test_verified_policy_escalates(monkeypatch):
    import sfvem.assembly.element as element

    real = element.count_small_eigenvalues
    seen = []

    def fake(K, tol_rel=1e-9):
        seen.append(K.shape)
        return real(K, tol_rel) + (1 if len(seen) == 1 else 0)

    monkeypatch.setattr(element, "count_small_eigenvalues", fake)
    _, ps = element_with_policy(polygon_metrics(regular_polygon(5)), MAT, DegreePolicy("verified"))
    assert ps.ell == 3 and len(seen) == 2


@pytest.mark.filterwarnings("ignore:strain Gram matrix")
def test_verified_policy_error_type(monkeypatch):
    import sfvem.assembly.element as element

    monkeypatch.setattr(element, "count_small_eigenvalues", lambda K, tol_rel=1e-9: 4)
    with pytest.raises(RankDeficiencyError):
        element_with_policy(polygon_metrics(regular_polygon(5)), MAT, DegreePolicy("verified"))


def test_body_force_and_traction_loads():
    g = polygon_metrics([(0, 0), (1, 0), (1, 1), (0, 1)])
    F = element_body_force(g, lambda x: np.array([[0.0, -1.0]]))
    np.testing.assert_allclose(F, [0, 0, 0, 0, -0.25, -0.25, -0.25, -0.25])
    np.testing.assert_allclose(edge_traction((0, 0), (1, 0), (0, -1), (1.0, 0.0)), [0.5, 0, 0.5, 0])
    # pentagon body force: vertex average formula with f(x_E)
    p = polygon_metrics(regular_polygon(5, radius=0.8, center=(0.2, 0.1)))
    f = lambda x: np.column_stack([x[:, 0] ** 2, np.sin(x[:, 1])])
    Fp = element_body_force(p, f)
    fc = f(p.centroid[None])[0]
    np.testing.assert_allclose(Fp.reshape(2, 5), np.outer(fc, np.full(5, p.area / 5)))


def test_variable_traction_against_exact_integral():
    # t = (x^2, 1 + x) on [0, 2] x {0}; exact consistent forces by hand
    t = lambda pts, n: np.column_stack([pts[:, 0] ** 2, 1 + pts[:, 0]])
    f = edge_traction((0, 0), (2, 0), (0, -1), t)
    # int_0^2 x^2 (1 - x/2) = 2/3, int_0^2 x^2 x/2 = 2, int (1+x)(1-x/2) = 5/3, int (1+x) x/2 = 7/3
    np.testing.assert_allclose(f, [2 / 3, 5 / 3, 2, 7 / 3], rtol=1e-14)


def test_element_force_scatter():
    g = polygon_metrics([(0, 0), (1, 0), (1, 1), (0, 1)])
    F = element_force(g, None, [(1, (2.0, 0.0))])  # right edge: vertices 1 and 2
    np.testing.assert_allclose(F, [0, 1, 1, 0, 0, 0, 0, 0])


def patch_problem(mesh, material=MAT):
    markers = mesh.markers()
    return ProblemDefinition(mesh, material, dirichlet={m: Dirichlet(AFFINE) for m in markers}, exact_displacement=AFFINE)


def test_single_element_global_equals_local():
    verts = regular_polygon(6)
    mesh = single_cell_mesh(verts)
    prob = patch_problem(mesh)
    gs = assemble_global(prob)
    K, _ = element_with_policy(polygon_metrics(verts), MAT)
    perm = local_to_global(range(6))
    np.testing.assert_allclose(gs.K.toarray()[np.ix_(perm, perm)], K, atol=1e-12 * np.abs(K).max())


def test_global_nullity_and_translation():
    mesh = generate_structured_quads((0, 1, 0, 1), 4, 4)
    gs = assemble_global(patch_problem(mesh))
    lam = np.linalg.eigvalsh(gs.K.toarray())
    assert np.sum(lam < 1e-9 * lam[-1]) == 3
    strip = generate_structured_quads((0, 2, 0, 1), 2, 1)
    Ks = assemble_global(patch_problem(strip)).K
    tx = np.tile([1.0, 0.0], strip.n_vertices)
    assert np.abs(Ks @ tx).max() <= 1e-10 * abs(Ks).max()


@pytest.mark.parametrize("kind", ["quads", "voronoi", "heptagons"])
@pytest.mark.parametrize("stabilized", [False, True])
def test_patch_exactness(kind, stabilized):
    if kind == "quads":
        mesh = generate_structured_quads((0, 1, 0, 1), 4, 4)
    elif kind == "voronoi":
        mesh = generate_voronoi_lloyd(Rectangle(), 16, n_lloyd=0, seed=5)
    else:
        mesh = split_quads_nonconvex(generate_structured_quads((0, 1, 0, 1), 3, 3))
    sol = solve(assemble_global(patch_problem(mesh), stabilized=stabilized))
    np.testing.assert_allclose(sol.displacement, AFFINE(mesh.vertices), atol=1e-10)


def test_fully_clamped_reduction_and_zero_solution():
    mesh = generate_structured_quads((0, 1, 0, 1), 3, 3)
    prob = ProblemDefinition(mesh, MAT, dirichlet={m: Dirichlet() for m in mesh.markers()})
    cs = apply_dirichlet(assemble_global(prob))
    assert cs.K_ff.shape[0] == 2 * 4
    sol = solve(cs)
    assert not np.any(sol.displacement)


def test_corner_conflict_and_priority():
    mesh = generate_structured_quads((0, 1, 0, 1), 2, 2)
    bcs = {"left": Dirichlet((0.0, 0.0)), "bottom": Dirichlet((1.0, 0.0))}
    free = {"right": (0.0, 0.0), "top": (0.0, 0.0)}
    with pytest.raises(BoundaryConditionError, match="priority"):
        apply_dirichlet(assemble_global(ProblemDefinition(mesh, MAT, dirichlet=bcs, traction=free)))
    prob = ProblemDefinition(mesh, MAT, dirichlet=bcs, traction=free, marker_priority=("bottom", "left"))
    cs = apply_dirichlet(assemble_global(prob))
    origin = int(np.flatnonzero(np.all(mesh.vertices == 0, axis=1))[0])
    assert cs.fixed_values[list(cs.fixed).index(2 * origin)] == 1.0


def test_problem_validation():
    mesh = generate_structured_quads((0, 1, 0, 1), 1, 1)
    with pytest.raises(BoundaryConditionError, match="no condition"):
        ProblemDefinition(mesh, MAT, dirichlet={"left": Dirichlet()}).check()
    with pytest.raises(BoundaryConditionError, match="both"):
        ProblemDefinition(mesh, MAT, dirichlet={"left": Dirichlet()}, traction={"left": (0, 0)}).check()
    with pytest.raises(BoundaryConditionError, match="rigid"):
        ProblemDefinition(mesh, MAT, traction={m: (0, 0) for m in mesh.markers()}).check()


def test_component_mask_leaves_other_component_free():
    mesh = generate_structured_quads((0, 1, 0, 1), 2, 2)
    prob = ProblemDefinition(
        mesh,
        MAT,
        dirichlet={"left": Dirichlet(0.0, (True, False)), "bottom": Dirichlet(0.0, (False, True))},
        traction={"right": (1.0, 0.0), "top": (0.0, 0.0)},
    )
    sol = solve(assemble_global(prob))
    # uniaxial stress sigma_xx = 1: u = (x / E, -nu y / E)
    exact = np.column_stack([mesh.vertices[:, 0] / MAT.E, -MAT.nu * mesh.vertices[:, 1] / MAT.E])
    np.testing.assert_allclose(sol.displacement, exact, atol=1e-15)
    assert sum(r[0] for r in sol.reactions.values()) == pytest.approx(-1.0)


def test_one_dof_system():
    assert solve_linear(sp.csr_matrix([[2.0]]), np.array([4.0]))[0] == pytest.approx(2.0)


def test_non_spd_diagnostic():
    K = sp.csr_matrix(np.diag([1.0, -1.0, 2.0]))
    with pytest.raises(SolverError, match="smallest eigenvalue estimate -1"):
        solve_linear(K, np.ones(3))
    singular = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(SolverError, match="not SPD"):
        solve_linear(singular, np.array([1.0, 0.0]))


def test_cg_path(monkeypatch):
    import sfvem.assembly.system as system

    monkeypatch.setattr(system, "DIRECT_SOLVE_LIMIT", 0)
    mesh = generate_voronoi_lloyd(Rectangle(), 30, n_lloyd=2, seed=4)
    sol = solve(assemble_global(patch_problem(mesh)))
    np.testing.assert_allclose(sol.displacement, AFFINE(mesh.vertices), atol=1e-10)


def test_thread_count_does_not_change_result():
    mesh = generate_voronoi_lloyd(Rectangle(0, 2, 0, 1), 60, n_lloyd=3, seed=9)
    prob = ProblemDefinition(
        mesh, MAT, body_force=lambda x: np.column_stack([np.cos(x[:, 0]), x[:, 1]]),
        dirichlet={"left": Dirichlet()}, traction={"right": (0.0, -1.0), "top": (0.0, 0.0), "bottom": (0.0, 0.0)},
    )
    a, b = assemble_global(prob, threads=1), assemble_global(prob, threads=4)
    assert (a.K != b.K).nnz == 0
    np.testing.assert_array_equal(a.F, b.F)
    np.testing.assert_array_equal(solve(a).displacement, solve(b).displacement)


def test_solution_files_roundtrip(tmp_path):
    mesh = generate_structured_quads((0, 1, 0, 1), 2, 2)
    sol = solve(assemble_global(patch_problem(mesh)))
    write_solution(tmp_path / "u.txt", sol)
    write_reactions(tmp_path / "r.txt", sol)
    np.testing.assert_array_equal(read_solution(tmp_path / "u.txt"), sol.displacement)
    assert (tmp_path / "r.txt").read_text().startswith("sfvem-reactions 1\n")
    (tmp_path / "bad.txt").write_text("garbage\n")
    with pytest.raises(ValueError, match="header"):
        read_solution(tmp_path / "bad.txt")


def test_cantilever_tip_deflection_150_cells():
    from sfvem.benchmarks import DEFAULT_LLOYD, get_case, run_mesh

    case = get_case("beam")
    mesh = case.mesh(150, DEFAULT_LLOYD, 0)
    _, sol, _ = run_mesh(case, mesh, "150")
    v = mesh.vertices
    tip = np.flatnonzero(np.isclose(v[:, 0], 8.0))
    i = tip[np.argmin(np.abs(v[tip, 1]))]
    exact = case.exact_u(v[i : i + 1])[0, 1]
    assert sol.displacement[i, 1] == pytest.approx(exact, rel=0.02)
