import io

import numpy as np
import pytest

from sfvem.analysis import (
    REPORTED_THRESHOLDS,
    ErrorReport,
    eigen_scan,
    error_energy,
    error_l2,
    error_linf,
    family_element,
    fit_convergence,
    fit_reports,
    reports_to_csv,
    spurious_mode_count,
    write_eigen_csv,
    write_error_dat,
)
from sfvem.assembly import MaterialModel, element_stiffness
from sfvem.benchmarks import case_patch, get_case, patch_meshes, run_mesh
from sfvem.geometry import polygon_metrics, regular_polygon

MAT = MaterialModel(1.0, 0.3)


def spurious(geom, ell):
    return spurious_mode_count(element_stiffness(geom, MAT, ell), ell=ell).spurious


def test_quad_degree_zero_and_one():
    quad = polygon_metrics([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert spurious(quad, 0) > 0
    assert spurious(quad, 1) == 0
    tri = polygon_metrics([(0, 0), (1, 0), (0, 1)])
    assert spurious(tri, 0) == 0


def test_regular_polygons_degree_two():
    assert spurious(polygon_metrics(regular_polygon(6)), 2) == 0
    # computed first failure for l=2 is the octagon; a regular heptagon is still rank-correct
    assert spurious(polygon_metrics(regular_polygon(7)), 2) == 0
    assert spurious(polygon_metrics(regular_polygon(8)), 2) > 0


def test_central_quad_nine_nodes_degree_two():
    assert spurious(family_element("central_quad", 9), 2) >= 1


def test_central_quad_thresholds_match_reported():
    scan = eigen_scan("central_quad", range(4), range(4, 14))
    assert scan.thresholds() == REPORTED_THRESHOLDS["central_quad"]


def test_regular_polygon_computed_thresholds():
    # rank analysis puts the first failure at N_E = 2l + 4
    scan = eigen_scan("regular_polygon", range(4), range(3, 13))
    assert scan.thresholds() == {0: 4, 1: 6, 2: 8, 3: 10}


@pytest.mark.parametrize("family", ["central_quad", "regular_polygon"])
def test_scan_monotonicity(family):
    scan = eigen_scan(family, range(4), range(4, 17))
    for ell in range(4):
        counts = scan.counts(ell)
        assert counts == sorted(counts)
    for n in range(4, 17):
        by_ell = [s for e, m, s in scan.rows if m == n]
        assert by_ell == sorted(by_ell, reverse=True)


def test_strict_policy_is_rank_correct_on_regular_polygons():
    from sfvem.polyspace import select_degree

    for n in range(3, 21):
        g = polygon_metrics(regular_polygon(n))
        assert spurious(g, select_degree(n)) == 0


def test_spurious_mode_count_errors_and_fields():
    rep = spurious_mode_count(np.diag([0.0, 0.0, 0.0, 1.0, 2.0, 3.0]), ell=1, element=4)
    assert (rep.n_zero, rep.spurious, rep.element, rep.n_vertices) == (3, 0, 4, 3)
    with pytest.raises(ValueError):
        spurious_mode_count(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        family_element("hexagonal", 6)


def test_fit_convergence_synthetic():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    assert fit_convergence(h, h**2).slope == pytest.approx(2.0, abs=1e-12)
    fit = fit_convergence(h, 3 * h)
    assert fit.slope == pytest.approx(1.0, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(3.0))
    assert fit.residual < 1e-12
    dropped = fit_convergence(h, [0.0, 0.04, 0.01, 0.0025])
    assert dropped.excluded == [0] and dropped.n_points == 3
    with pytest.raises(ValueError):
        fit_convergence(h, [0, 0, 1, 1])


def test_fit_reports_validation():
    reps = [ErrorReport(str(k), 1, h, 1, h**2, h) for k, h in enumerate((0.3, 0.2, 0.1))]
    slopes = fit_reports(reps)
    assert slopes["l2"].slope == pytest.approx(2.0) and slopes["energy"].slope == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_reports(reps[:2])
    with pytest.raises(ValueError):
        fit_reports(reps[::-1])


def test_error_norms_vanish_for_linear_solution():
    case = case_patch()
    for name, mesh in patch_meshes(seed=0).items():
        rep, sol, system = run_mesh(case, mesh, name)
        assert max(rep.err_linf, rep.err_l2, rep.err_energy) <= 1e-12
        # perturbing the vertex values raises every norm above round-off
        sol.displacement[:] += 1e-3 * np.sin(mesh.vertices)
        assert error_linf(mesh, sol, case.exact_u) > 1e-4
        assert error_l2(mesh, sol, case.exact_u, system.projectors) > 1e-5
        assert error_energy(mesh, sol, case.exact_strain, case.material, system.projectors) > 1e-5


def test_error_quadrature_saturation():
    case = get_case("beam")
    mesh = case.mesh(150, 20, 0)
    _, sol, system = run_mesh(case, mesh)
    for fn, args in (
        (error_l2, (case.exact_u, system.projectors)),
        (error_energy, (case.exact_strain, case.material, system.projectors)),
    ):
        a, b = fn(mesh, sol, *args, order=5), fn(mesh, sol, *args, order=7)
        assert abs(a - b) < 0.01 * b


def test_csv_outputs():
    reps = [ErrorReport("m1", 10, np.float64(0.5), 1e-3, 2e-4, 3e-2)]
    text = reports_to_csv(reps)
    assert text.splitlines()[0] == "mesh_id,n_cells,h_max,err_linf,err_l2,err_energy"
    assert text.splitlines()[1] == "m1,10,0.5,0.001,0.0002,0.03"
    buf = io.StringIO()
    write_error_dat(buf, reps, "demo")
    rows = [line for line in buf.getvalue().splitlines() if not line.startswith("#")]
    assert np.allclose(np.loadtxt(rows), [10, 0.5, 1e-3, 2e-4, 3e-2])
    buf = io.StringIO()
    write_eigen_csv(buf, [eigen_scan("regular_polygon", [1], [4, 5])])
    assert buf.getvalue().splitlines() == ["family,ell,NE,spurious", "regular_polygon,1,4,0", "regular_polygon,1,5,0"]
