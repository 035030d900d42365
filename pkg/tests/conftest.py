import numpy as np
import pytest

from sfvem.geometry import polygon_metrics, regular_polygon


def random_convex_polygon(rng, n, scale=1.0):
    """Convex n-gon: sorted random angles on a jittered ellipse."""
    while True:
        th = np.sort(rng.uniform(0, 2 * np.pi, n))
        if np.min(np.diff(np.append(th, th[0] + 2 * np.pi))) > 0.15:
            break
    a, b = rng.uniform(0.5, 2.0, 2) * scale
    pts = np.column_stack([a * np.cos(th), b * np.sin(th)])
    rot = rng.uniform(0, np.pi)
    R = np.array([[np.cos(rot), -np.sin(rot)], [np.sin(rot), np.cos(rot)]])
    return pts @ R.T + rng.uniform(-5, 5, 2)


def zigzag_heptagon(offset=0.2):
    """Left piece of a unit quad cut along a zig-zag, as in the nonconvex meshes."""
    return np.array([
        [0.0, 0.0], [0.5, 0.0], [0.5 + offset, 0.25], [0.5 - offset, 0.5],
        [0.5 + offset, 0.75], [0.5, 1.0], [0.0, 1.0],
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def unit_square():
    return polygon_metrics([(0, 0), (1, 0), (1, 1), (0, 1)])


@pytest.fixture
def pentagon():
    return polygon_metrics(regular_polygon(5, radius=0.7, center=(0.3, -0.2)))


@pytest.fixture
def heptagon():
    return polygon_metrics(zigzag_heptagon())


def green_moment(vertices, r, k, shift=(0.0, 0.0), scale=1.0):
    """Oracle for int ((x-sx)/s)^r ((y-sy)/s)^k dA via Green's theorem.

    The boundary integral of X^(r+1) Y^k / (r+1) dY is evaluated edge by edge
    with a Gauss rule that is exact for the polynomial trace.
    """
    v = (np.asarray(vertices, float) - shift) / scale
    t, w = np.polynomial.legendre.leggauss(r + k + 2)
    t, w = 0.5 * (t + 1), 0.5 * w
    total = 0.0
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        p = a + t[:, None] * (b - a)
        total += w @ (p[:, 0] ** (r + 1) * p[:, 1] ** k) / (r + 1) * (b[1] - a[1])
    return total * scale**2


# ---------------------------------------------------------------- acceptance summary

_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        _ACCEPTANCE[props["criterion"]] = (report.passed, props.get("detail", report.longreprtext.splitlines()[-1] if report.failed else ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'} | {detail}")
