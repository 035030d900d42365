"""Scaled polynomial bases and the per-element strain-degree rule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal

import numpy as np

from .geometry.polygon import ElementGeometry
from .quadrature import monomial_exponents, n_monomials

DegreeMode = Literal["paper_sufficient", "strict_regular", "verified"]
MODES = ("paper_sufficient", "strict_regular", "verified")
MAX_VERIFIED_DEGREE = 12


@dataclass(frozen=True)
class DegreePolicy:
    mode: DegreeMode = "strict_regular"
    fixed: int | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown degree policy {self.mode!r}; choose from {MODES}")
        if self.fixed is not None and self.fixed < 0:
            raise ValueError("fixed degree must be >= 0")


def select_degree(n_vertices: int, policy: DegreePolicy = DegreePolicy(), rank_ok: Callable[[int], bool] | None = None) -> int:
    """Strain-projection degree for a cell with ``n_vertices`` vertices.

    ``paper_sufficient`` takes the smallest l with N <= 2l + 3,
    ``strict_regular`` the smallest l with N <= 2l + 2.  ``verified`` starts
    from ``strict_regular`` and raises l until ``rank_ok(l)`` holds; it needs
    the callback because the check requires the element stiffness.
    """
    if n_vertices < 3:
        raise ValueError("a polygon has at least 3 vertices")
    if policy.fixed is not None:
        return policy.fixed
    if policy.mode == "paper_sufficient":
        return max(0, math.ceil((n_vertices - 3) / 2))
    strict = max(0, math.ceil((n_vertices - 2) / 2))
    if policy.mode == "strict_regular":
        return strict
    if rank_ok is None:
        raise ValueError("verified degree selection needs a rank check callback")
    ell = strict
    while not rank_ok(ell):
        ell += 1
        if ell > MAX_VERIFIED_DEGREE:
            raise RuntimeError(f"no degree up to {MAX_VERIFIED_DEGREE} removes the spurious modes")
    return ell


def _scaled(geometry: ElementGeometry, x) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    h = geometry.diameter
    return (x[..., 0] - geometry.centroid[0]) / h, (x[..., 1] - geometry.centroid[1]) / h


class VectorLinearBasis:
    """The six linear vector fields: two translations, rotation, shear and two stretches.

    m1 = (1, 0), m2 = (0, 1), m3 = (-eta, xi), m4 = (eta, xi),
    m5 = (xi, 0), m6 = (0, eta).
    """

    def __init__(self, geometry: ElementGeometry):
        self.geometry = geometry
        h = geometry.diameter
        strain = np.zeros((3, 6))
        strain[2, 3] = 2.0 / h
        strain[0, 4] = 1.0 / h
        strain[1, 5] = 1.0 / h
        strain.setflags(write=False)
        self.strain = strain  # Voigt strain S m_alpha, constant per column

    def __call__(self, x) -> np.ndarray:
        xi, eta = _scaled(self.geometry, x)
        one = np.ones_like(xi)
        zero = np.zeros_like(xi)
        comp1 = np.stack([one, zero, -eta, eta, xi, zero], axis=-1)
        comp2 = np.stack([zero, one, xi, xi, zero, eta], axis=-1)
        return np.stack([comp1, comp2], axis=-2)  # (..., 2, 6)

    def at_vertices(self) -> np.ndarray:
        """(2N, 6) values in block DOF order: x-components then y-components."""
        vals = self(self.geometry.vertices)
        return np.vstack([vals[:, 0, :], vals[:, 1, :]])


def eval_vector_basis(basis: VectorLinearBasis, x) -> np.ndarray:
    return basis(x)


@lru_cache(maxsize=None)
def _divergence_table(ell: int) -> np.ndarray:
    """Coefficients of the divergence of each strain-basis column.

    Entry ``[c, j, q]`` multiplies monomial ``q`` (degree <= ell - 1) in
    component ``c`` of the divergence of column ``j``, before the 1/h factor.
    """
    mons = monomial_exponents(ell)
    lower = monomial_exponents(max(ell - 1, 0))
    index = {e: q for q, e in enumerate(lower)}
    table = np.zeros((2, 3 * len(mons), len(lower)))
    for a, (r, k) in enumerate(mons):
        dx = (r, r - 1, k) if r > 0 else None  # coefficient, new exponents
        dy = (k, r, k - 1) if k > 0 else None
        for p in range(3):
            j = 3 * a + p
            if p == 0 and dx:
                table[0, j, index[(dx[1], dx[2])]] += dx[0]
            if p == 1 and dy:
                table[1, j, index[(dy[1], dy[2])]] += dy[0]
            if p == 2:
                if dy:
                    table[0, j, index[(dy[1], dy[2])]] += dy[0]
                if dx:
                    table[1, j, index[(dx[1], dx[2])]] += dx[0]
    table.setflags(write=False)
    return table


class StrainPolyBasis:
    """Voigt strain polynomials of degree <= ell: each scaled monomial times e_1, e_2, e_3.

    Column ``3 * a + p`` is monomial ``a`` (graded order) in Voigt row ``p``.
    """

    def __init__(self, geometry: ElementGeometry, ell: int):
        if ell < 0:
            raise ValueError("degree must be >= 0")
        self.geometry = geometry
        self.ell = ell
        self.exponents = monomial_exponents(ell)
        self.n_monomials = n_monomials(ell)
        self.n_cols = 3 * self.n_monomials

    def monomials(self, x) -> np.ndarray:
        xi, eta = _scaled(self.geometry, x)
        return np.stack([xi**r * eta**k for r, k in self.exponents], axis=-1)

    def __call__(self, x) -> np.ndarray:
        m = self.monomials(x)  # (..., n)
        out = np.zeros(m.shape[:-1] + (3, self.n_cols))
        for p in range(3):
            out[..., p, p::3] = m
        return out

    def divergence_coefficients(self) -> np.ndarray:
        """(2, n_cols, n_lower) coefficients in the degree-(ell-1) monomials, with 1/h applied."""
        return _divergence_table(self.ell) / self.geometry.diameter

    def divergence(self, x) -> np.ndarray:
        """Evaluate the divergence operator applied to every column: (..., 2, n_cols)."""
        xi, eta = _scaled(self.geometry, x)
        lower = monomial_exponents(max(self.ell - 1, 0))
        vals = np.stack([xi**r * eta**k for r, k in lower], axis=-1)
        coef = self.divergence_coefficients()
        return np.einsum("cjq,...q->...cj", coef, vals)


def eval_strain_basis(basis: StrainPolyBasis, x) -> np.ndarray:
    return basis(x)


def divergence_strain_basis(basis: StrainPolyBasis) -> np.ndarray:
    return basis.divergence_coefficients()
