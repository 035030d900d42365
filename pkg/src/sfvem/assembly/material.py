"""Isotropic plane elasticity in Voigt form (eps_xx, eps_yy, gamma_xy)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

Hypothesis = Literal["plane_stress", "plane_strain"]


def material_matrix(E: float, nu: float, hypothesis: Hypothesis = "plane_stress") -> np.ndarray:
    if E <= 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if hypothesis == "plane_stress":
        if not -1.0 < nu < 1.0:
            raise ValueError(f"plane stress needs |nu| < 1, got {nu}")
        return E / (1.0 - nu**2) * np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]])
    if hypothesis == "plane_strain":
        if not -1.0 < nu < 0.5:
            raise ValueError(f"plane strain needs -1 < nu < 0.5 (incompressible limit excluded), got {nu}")
        f = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return f * np.array([[1.0 - nu, nu, 0.0], [nu, 1.0 - nu, 0.0], [0.0, 0.0, 0.5 * (1.0 - 2.0 * nu)]])
    raise ValueError(f"unknown hypothesis {hypothesis!r}")


@dataclass(frozen=True)
class MaterialModel:
    E: float
    nu: float
    hypothesis: Hypothesis = "plane_stress"
    C: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        C = material_matrix(self.E, self.nu, self.hypothesis)
        C.setflags(write=False)
        object.__setattr__(self, "C", C)

    @property
    def shear_modulus(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    def stress(self, strain) -> np.ndarray:
        return np.asarray(strain) @ self.C.T

    def strain(self, stress) -> np.ndarray:
        return np.linalg.solve(self.C, np.asarray(stress).T).T
