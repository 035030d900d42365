"""One-dimensional rules, scaled boundary cubature and polygon moments."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre

from .geometry.polygon import ElementGeometry


@dataclass(frozen=True)
class Rule1D:
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.nodes)

    def on_unit_interval(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights mapped to [0, 1]."""
        return 0.5 * (self.nodes + 1.0), 0.5 * self.weights


def _frozen(nodes, weights) -> Rule1D:
    nodes = np.asarray(nodes, dtype=float)
    weights = np.asarray(weights, dtype=float)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return Rule1D(nodes, weights)


@lru_cache(maxsize=None)
def gauss_legendre_1d(n: int) -> Rule1D:
    """n-point Gauss-Legendre rule on [-1, 1], exact to degree 2n - 1."""
    if not 1 <= n <= 32:
        raise ValueError(f"Gauss-Legendre point count must be in [1, 32], got {n}")
    x, w = legendre.leggauss(n)
    return _frozen(x, w)


@lru_cache(maxsize=None)
def gauss_lobatto_1d(n: int) -> Rule1D:
    """n-point Gauss-Lobatto rule on [-1, 1] (endpoints included), exact to degree 2n - 3."""
    if not 2 <= n <= 16:
        raise ValueError(f"Gauss-Lobatto point count must be in [2, 16], got {n}")
    # interior nodes are the roots of P'_{n-1}
    c = np.zeros(n)
    c[-1] = 1.0
    d1 = legendre.legder(c)
    d2 = legendre.legder(d1)
    interior = np.sort(legendre.legroots(d1)) if n > 2 else np.empty(0)
    for _ in range(3):
        interior = interior - legendre.legval(interior, d1) / legendre.legval(interior, d2)
    x = np.concatenate([[-1.0], interior, [1.0]])
    p = legendre.legval(x, c)
    w = 2.0 / (n * (n - 1) * p**2)
    # symmetrize against round-off in the root finder
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return _frozen(x, w)


def sbc_order_for_degree(degree: int) -> int:
    """Points per direction making the SBC rule exact for total degree ``degree``."""
    # radial integrand carries an extra factor of the radial coordinate
    return degree // 2 + 1


def sbc_rule(geometry: ElementGeometry, order: int, center=None) -> tuple[np.ndarray, np.ndarray]:
    """Points and weights of the scaled boundary cubature on a polygon.

    Each edge ``e_i`` is swept from the scaling center ``x_c``; the weight of a
    tensor point is ``l_i |e_i| * s * w_s * w_t`` with ``l_i`` the signed
    distance from ``x_c`` to the edge line, so cells that are not star-shaped
    about ``x_c`` are still integrated correctly.
    """
    if order < 1:
        raise ValueError("SBC order must be >= 1")
    xc = geometry.centroid if center is None else np.asarray(center, dtype=float)
    s, ws = gauss_legendre_1d(order).on_unit_interval()
    t, wt = s, ws
    v = geometry.vertices
    nxt = np.roll(v, -1, axis=0)
    dist = ((v - xc) * geometry.normals).sum(1)
    scale = dist * geometry.edge_lengths  # (N,)
    # r_i(t) on each edge: (N, nt, 2)
    r = v[:, None, :] + t[None, :, None] * (nxt - v)[:, None, :]
    pts = xc + s[None, None, :, None] * (r[:, :, None, :] - xc)  # (N, nt, ns, 2)
    w = scale[:, None, None] * (wt[None, :, None] * (s * ws)[None, None, :])
    return pts.reshape(-1, 2), w.reshape(-1)


def sbc_integrate(geometry: ElementGeometry, f, order: int = 3, center=None):
    """Integrate ``f`` over the polygon with the scaled boundary cubature.

    ``f`` maps an (M, 2) array of points to an array whose leading axis has
    length M; the trailing shape is preserved in the result.
    """
    pts, w = sbc_rule(geometry, order, center)
    vals = np.asarray(f(pts), dtype=float)
    return np.tensordot(w, vals, axes=(0, 0))


def monomial_exponents(degree: int) -> list[tuple[int, int]]:
    """Graded ordering 1, xi, eta, xi^2, xi*eta, eta^2, ..."""
    return [(d - k, k) for d in range(degree + 1) for k in range(d + 1)]


def n_monomials(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


@dataclass(frozen=True)
class MomentTable:
    """Integrals of xi^r eta^k over one cell for r + k <= max_degree.

    ``values[r, k]`` holds the moment; entries with r + k > max_degree are
    NaN so accidental use is loud.
    """

    geometry: ElementGeometry
    max_degree: int
    values: np.ndarray

    def __call__(self, r: int, k: int) -> float:
        if r + k > self.max_degree or r < 0 or k < 0:
            raise IndexError(f"moment ({r}, {k}) outside table of degree {self.max_degree}")
        return float(self.values[r, k])


def monomial_moments(geometry: ElementGeometry, max_degree: int, order: int | None = None) -> MomentTable:
    """Scaled monomial moments via the SBC rule, exact for polynomials."""
    if max_degree < 0:
        raise ValueError("max_degree must be >= 0")
    if order is None:
        order = sbc_order_for_degree(max_degree) + 1
    pts, w = sbc_rule(geometry, order)
    h = geometry.diameter
    xi = (pts[:, 0] - geometry.centroid[0]) / h
    eta = (pts[:, 1] - geometry.centroid[1]) / h
    pw = np.arange(max_degree + 1)
    P = xi[:, None] ** pw
    Q = eta[:, None] ** pw
    vals = (P * w[:, None]).T @ Q
    mask = pw[:, None] + pw[None, :] > max_degree
    vals[mask] = np.nan
    vals.setflags(write=False)
    return MomentTable(geometry, max_degree, vals)
