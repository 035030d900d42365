import warnings

import numpy as np
import pytest

from sfvem.assembly import material_matrix
from sfvem.geometry import (
    Annulus,
    Rectangle,
    central_quad_mesh,
    generate_structured_quads,
    generate_voronoi_lloyd,
    polygon_metrics,
    regular_polygon,
    split_quads_nonconvex,
)
from sfvem.polyspace import DegreePolicy, StrainPolyBasis, VectorLinearBasis, select_degree
from sfvem.projectors import (
    build_projectors,
    dofs_from_field,
    dump_projectors,
    project_displacement,
    project_strain,
)
from sfvem.quadrature import monomial_exponents, sbc_integrate

from conftest import random_convex_polygon, zigzag_heptagon

C = material_matrix(1.0, 0.3)


def linear_fields():
    """(displacement, Voigt strain) pairs spanning all linear fields."""
    A = np.array([[1.3, -0.4], [0.7, 2.1]])
    yield (lambda x: x @ A.T + [0.5, -1.0]), np.array([A[0, 0], A[1, 1], A[0, 1] + A[1, 0]])
    yield (lambda x: np.column_stack([x[:, 0], 0 * x[:, 0]])), np.array([1.0, 0, 0])
    yield (lambda x: np.column_stack([-x[:, 1], x[:, 0]])), np.zeros(3)


def sample_elements(rng):
    out = [polygon_metrics(random_convex_polygon(rng, n)) for n in (3, 4, 5, 6, 8, 11)]
    out += [polygon_metrics(regular_polygon(n)) for n in (5, 9)]
    out.append(polygon_metrics(zigzag_heptagon()))
    return out


def test_energy_projector_reproduces_basis(rng):
    for g in sample_elements(rng):
        ps = build_projectors(g, C, 1)
        vert = VectorLinearBasis(g).at_vertices()
        np.testing.assert_allclose(ps.Pi @ vert, np.eye(6), atol=1e-10)


def test_factor_residuals(rng):
    for g in sample_elements(rng):
        for ell in range(4):
            ps = build_projectors(g, C, ell)
            r1 = np.linalg.norm(ps.G_tilde @ ps.Pi - ps.B_tilde)
            r2 = np.linalg.norm(ps.G @ ps.Pi_m - ps.B)
            assert r1 <= 1e-11 * np.linalg.norm(ps.B_tilde)
            assert r2 <= 1e-10 * np.linalg.norm(ps.B)


def _consistency_error(g, ell):
    ps = build_projectors(g, C, ell)
    worst = 0.0
    for u, eps in linear_fields():
        coeffs = ps.Pi_m @ dofs_from_field(g, u)
        coeffs[:3] -= eps
        worst = max(worst, np.abs(coeffs).max())
    return worst, ps.gram_condition


def test_strain_consistency_at_policy_degrees():
    meshes = [
        generate_voronoi_lloyd(Rectangle(0, 8, -0.5, 0.5), 150, n_lloyd=10, seed=2),
        generate_voronoi_lloyd(Annulus(), 120, n_lloyd=10, seed=0),
        split_quads_nonconvex(generate_structured_quads((0, 8, -0.5, 0.5), 16, 2)),
    ]
    meshes += [central_quad_mesh(n) for n in (6, 9, 10)]
    for g in (m.geometry(c) for m in meshes for c in range(m.n_cells)):
        for mode in ("paper_sufficient", "strict_regular"):
            ell = select_degree(g.n_vertices, DegreePolicy(mode))
            assert _consistency_error(g, ell)[0] <= 1e-10


@pytest.mark.parametrize("ell", [0, 1, 2, 3])
def test_strain_consistency_any_degree(rng, ell):
    # off-policy degrees (e.g. a cubic strain on a triangle) lose digits in
    # proportion to the monomial Gram conditioning, not to the assembly
    for g in sample_elements(rng):
        err, cond = _consistency_error(g, ell)
        assert err <= max(1e-10, 1e-16 * cond * 100)


def test_rigid_modes_annihilated(rng):
    for g in sample_elements(rng):
        ps = build_projectors(g, C, 2)
        rigid = VectorLinearBasis(g).at_vertices()[:, :3]
        np.testing.assert_allclose(ps.Pi_m @ rigid, 0.0, atol=1e-11)


def test_projected_displacement_values():
    g = polygon_metrics([(0, 0), (1, 0), (1, 1), (0, 1)])
    ps = build_projectors(g, C, 1)
    x = np.array([[0.3, 0.7], [0.9, 0.1]])
    dofs = np.concatenate([np.ones(4), np.zeros(4)])
    np.testing.assert_allclose(project_displacement(ps, dofs, x), [[1, 0], [1, 0]], atol=1e-14)
    u = lambda p: np.column_stack([p[:, 0], p[:, 0] + p[:, 1]])
    np.testing.assert_allclose(project_displacement(ps, dofs_from_field(g, u), x[:1]), [[0.3, 1.0]], atol=1e-14)


def test_projection_at_centroid_matches_vertex_average(rng):
    g = polygon_metrics(random_convex_polygon(rng, 6))
    ps = build_projectors(g, C, 2)
    dofs = rng.normal(size=12)
    # rows 1-3 of the energy projector match vertex averages of translations and rotation
    vert = VectorLinearBasis(g).at_vertices()
    proj = VectorLinearBasis(g).at_vertices() @ (ps.Pi @ dofs)
    np.testing.assert_allclose(vert[:, :3].T @ proj, vert[:, :3].T @ dofs, atol=1e-12)


def brute_force_B(g, ell, Pi):
    """Independent B: high-order edge Gauss for the boundary part, SBC for the volume part."""
    N = g.n_vertices
    basis = StrainPolyBasis(g, ell)
    vb = VectorLinearBasis(g)
    t, w = np.polynomial.legendre.leggauss(ell + 3)
    t, w = 0.5 * (t + 1), 0.5 * w
    B = np.zeros((basis.n_cols, 2 * N))
    for i in range(N):
        j = (i + 1) % N
        a, b = g.vertices[i], g.vertices[j]
        nx, ny = g.normals[i]
        pts = a + t[:, None] * (b - a)
        Np = basis(pts)  # (q, 3, n)
        # traction operator N^dE applied to the strain basis: (q, 2, n)
        trac = np.stack([nx * Np[:, 0] + ny * Np[:, 2], ny * Np[:, 1] + nx * Np[:, 2]], axis=1)
        for vtx, phi in ((i, 1 - t), (j, t)):
            for c in range(2):
                B[:, vtx + c * N] += g.edge_lengths[i] * np.einsum("q,q,qn->n", w, phi, trac[:, c])
    vol = sbc_integrate(g, lambda x: np.einsum("qcn,qcb->qnb", basis.divergence(x), vb(x)), order=ell + 3)
    return B - vol @ Pi


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_B_matches_brute_force(rng, ell):
    for g in sample_elements(rng):
        ps = build_projectors(g, C, ell)
        ref = brute_force_B(g, ell, ps.Pi)
        np.testing.assert_allclose(ps.B, ref, atol=1e-12 * np.abs(ref).max())


def test_gram_matches_direct_integration(heptagon):
    ps = build_projectors(heptagon, C, 2)
    basis = StrainPolyBasis(heptagon, 2)
    ref = sbc_integrate(heptagon, lambda x: np.einsum("qi,qj->qij", basis.monomials(x), basis.monomials(x)), order=5)
    np.testing.assert_allclose(ps.gram, ref, rtol=1e-12, atol=1e-16)
    assert len(monomial_exponents(2)) == ps.gram.shape[0]


def test_strain_evaluation(rng):
    g = polygon_metrics(random_convex_polygon(rng, 5))
    ps = build_projectors(g, C, 2)
    x = rng.uniform(-1, 1, (4, 2)) + g.centroid
    u = lambda p: np.column_stack([p[:, 0], 0 * p[:, 0]])
    np.testing.assert_allclose(project_strain(ps, dofs_from_field(g, u), x), np.tile([1, 0, 0], (4, 1)), atol=1e-10)


def test_gram_solve_is_well_conditioned():
    # a 1e5:1 sliver is hopeless for scaled monomials but not for the box basis
    g = polygon_metrics([(0, 0), (1, 0), (1, 1e-5), (0, 1e-5)])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ps = build_projectors(g, C, 3)
    assert ps.gram_condition > 1e12
    assert np.linalg.cond(ps.stable.gram) < 1e3


def test_ill_conditioned_gram_warns(monkeypatch):
    import sfvem.projectors as projectors

    monkeypatch.setattr(projectors, "GRAM_COND_WARN", 1.0)
    with pytest.warns(UserWarning, match="condition"):
        build_projectors(polygon_metrics(regular_polygon(6)), C, 2)


def test_box_basis_monomial_map(rng):
    from sfvem.projectors import BoxLegendreBasis

    for n, ell in ((5, 2), (9, 4), (3, 0)):
        g = polygon_metrics(random_convex_polygon(rng, n))
        leg = BoxLegendreBasis(g, ell)
        x = rng.uniform(-1, 1, (20, 2)) * g.diameter + g.centroid
        mono = StrainPolyBasis(g, ell).monomials(x)
        np.testing.assert_allclose(leg(x), mono @ leg.T, atol=1e-12 * np.abs(leg(x)).max())
        d = 1e-6 * g.diameter
        fd = (leg(x + [d, 0]) - leg(x - [d, 0])) / (2 * d)
        np.testing.assert_allclose(leg.gradient(x)[:, 0], fd, atol=1e-6 * max(1.0, np.abs(fd).max()))


def test_dump_projectors_roundtrip(unit_square):
    import io

    ps = build_projectors(unit_square, C, 1)
    buf = io.StringIO()
    dump_projectors(ps, buf, "square")
    lines = buf.getvalue().splitlines()
    i = lines.index("Pi_m 9 8")
    mat = np.array([[float(v) for v in line.split()] for line in lines[i + 1 : i + 10]])
    np.testing.assert_array_equal(mat, ps.Pi_m)
