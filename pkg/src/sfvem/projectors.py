"""Element projectors: energy projection of displacements onto linear fields
and L2 projection of the strain onto degree-l Voigt polynomials."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.signal import convolve2d

from .geometry.polygon import ElementGeometry
from .polyspace import StrainPolyBasis, VectorLinearBasis
from .quadrature import (
    MomentTable,
    gauss_legendre_1d,
    gauss_lobatto_1d,
    monomial_exponents,
    monomial_moments,
    sbc_order_for_degree,
    sbc_rule,
)

GRAM_COND_WARN = 1e12


class ProjectorError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class ProjectorSet:
    """All per-element projection data.

    Local DOF order is block-wise: x-displacements of vertices 1..N, then
    y-displacements.
    """

    geometry: ElementGeometry
    ell: int
    G_tilde: np.ndarray  # (6, 6)
    B_tilde: np.ndarray  # (6, 2N)
    Pi: np.ndarray  # (6, 2N)
    G: np.ndarray  # (3n, 3n)
    B: np.ndarray  # (3n, 2N)
    Pi_m: np.ndarray  # (3n, 2N)
    gram: np.ndarray  # (n, n) scalar monomial Gram matrix
    moments: MomentTable
    stable: "StableProjection | None" = None

    @property
    def n_dofs(self) -> int:
        return 2 * self.geometry.n_vertices

    @property
    def gram_condition(self) -> float:
        return float(np.linalg.cond(self.gram))


def dofs_from_field(geometry: ElementGeometry, u) -> np.ndarray:
    """Block-ordered DOF vector of a displacement field ``u(points) -> (M, 2)``."""
    vals = np.asarray(u(geometry.vertices), dtype=float)
    return np.concatenate([vals[:, 0], vals[:, 1]])


def _edge_shape_integrals(geometry: ElementGeometry, rule, weights_fn):
    """Per-edge integrals of weights_fn(points) times the two hat functions.

    Returns (I_start, I_end) of shape (N, ...) for the hat at the edge's first
    and second vertex.
    """
    v = geometry.vertices
    nxt = np.roll(v, -1, axis=0)
    t, w = rule.nodes, rule.weights
    s = 0.5 * (1.0 + t)
    pts = v[:, None, :] + s[None, :, None] * (nxt - v)[:, None, :]  # (N, q, 2)
    vals = weights_fn(pts)  # (N, q, ...)
    jac = 0.5 * geometry.edge_lengths
    extra = (None,) * (vals.ndim - 2)
    phi0 = (1.0 - s)[(None, slice(None)) + extra]
    phi1 = s[(None, slice(None)) + extra]
    ww = w[(None, slice(None)) + extra]
    jac = jac[(slice(None),) + extra]
    i0 = jac * (ww * phi0 * vals).sum(1)
    i1 = jac * (ww * phi1 * vals).sum(1)
    return i0, i1


def build_energy_projector(geometry: ElementGeometry, C: np.ndarray):
    """Assemble G~, B~ and solve for the energy projector Pi (6 x 2N).

    Rows 1-3 pin the rigid modes with the vertex-average inner product; rows
    4-6 impose energy orthogonality, whose right-hand side reduces to edge
    integrals of the (linear) traces, done with 2-point Gauss-Lobatto.
    """
    N = geometry.n_vertices
    basis = VectorLinearBasis(geometry)
    vert = basis.at_vertices()  # (2N, 6)
    Sm = basis.strain  # (3, 6)
    CSm = C @ Sm

    G_tilde = np.empty((6, 6))
    G_tilde[:3] = (vert.T @ vert)[:3] / N
    G_tilde[3:] = (Sm.T @ CSm)[3:] * geometry.area

    i0, i1 = _edge_shape_integrals(geometry, gauss_lobatto_1d(2), lambda p: np.ones(p.shape[:2]))
    n = geometry.normals
    qx = i0 * n[:, 0] + np.roll(i1 * n[:, 0], 1)
    qy = i0 * n[:, 1] + np.roll(i1 * n[:, 1], 1)

    B_tilde = np.empty((6, 2 * N))
    B_tilde[:3] = vert.T[:3] / N
    rowx = np.column_stack([qx, np.zeros(N), qy])  # traction weights for x-dofs
    rowy = np.column_stack([np.zeros(N), qy, qx])
    B_tilde[3:, :N] = (rowx @ CSm).T[3:]
    B_tilde[3:, N:] = (rowy @ CSm).T[3:]

    try:
        Pi = np.linalg.solve(G_tilde, B_tilde)
    except np.linalg.LinAlgError as exc:
        raise ProjectorError(f"singular energy-projection matrix on element with {N} vertices") from exc
    return G_tilde, B_tilde, Pi


def _linear_field_coefficients() -> np.ndarray:
    """m_beta components as coefficients on (1, xi, eta): shape (2, 6, 3)."""
    c = np.zeros((2, 6, 3))
    c[0, 0, 0] = 1.0
    c[1, 1, 0] = 1.0
    c[0, 2, 2], c[1, 2, 1] = -1.0, 1.0
    c[0, 3, 2], c[1, 3, 1] = 1.0, 1.0
    c[0, 4, 1] = 1.0
    c[1, 5, 2] = 1.0
    return c


_LINEAR = _linear_field_coefficients()


@lru_cache(maxsize=None)
def _legendre_tables(ell: int) -> tuple[np.ndarray, np.ndarray]:
    """Derivative matrix (column a holds P'_a in the Legendre basis) and
    power-basis coefficients (column a holds P_a)."""
    eye = np.eye(ell + 1)
    dmat = np.zeros((ell + 1, ell + 1))
    power = np.zeros((ell + 1, ell + 1))
    for a in range(ell + 1):
        if a:
            dmat[:ell, a] = legendre.legder(eye[a])
        power[: a + 1, a] = legendre.leg2poly(eye[a])
    dmat.setflags(write=False)
    power.setflags(write=False)
    return dmat, power


class BoxLegendreBasis:
    """Tensor Legendre polynomials P_a(y1) P_b(y2), a + b <= l, on the cell's
    principal-axis bounding box mapped to [-1, 1]^2.

    Spans the same space as the scaled monomials but with a Gram matrix that
    stays well conditioned at high degree.  ``T`` holds the exact monomial
    coefficients of each member: ``p_j = sum_a T[a, j] m_a``.
    """

    def __init__(self, geometry: ElementGeometry, ell: int):
        self.geometry = geometry
        self.ell = ell
        self.exponents = monomial_exponents(ell)
        self.n = len(self.exponents)
        pts, w = sbc_rule(geometry, 2)
        d = pts - geometry.centroid
        _, R = np.linalg.eigh((w[:, None] * d).T @ d)
        r = (geometry.vertices - geometry.centroid) @ R
        lo, hi = r.min(0), r.max(0)
        self.R = R
        self.mid = 0.5 * (lo + hi)
        self.half = 0.5 * (hi - lo)
        self.jac = R / self.half  # dy_k / dx_j
        self.dmat, self.power = _legendre_tables(ell)
        self.T = self._monomial_coefficients()

    def _monomial_coefficients(self) -> np.ndarray:
        # y_k is affine in (xi, eta); expand its powers as 2-D coefficient
        # arrays c[r, k] of xi^r eta^k, then combine into Legendre products
        ell, h = self.ell, self.geometry.diameter
        leg = []
        for k in range(2):
            lin = np.array([[-self.mid[k] / self.half[k], h * self.jac[1, k]], [h * self.jac[0, k], 0.0]])
            pw = [np.zeros((ell + 1, ell + 1))]
            pw[0][0, 0] = 1.0
            for _ in range(ell):
                pw.append(convolve2d(pw[-1], lin)[: ell + 1, : ell + 1])
            leg.append(np.tensordot(self.power.T, np.stack(pw), axes=1))  # P_a(y_k) for every a
        r, c = np.array(self.exponents).T
        T = np.empty((self.n, self.n))
        for j, (a, b) in enumerate(self.exponents):
            T[:, j] = convolve2d(leg[0][a], leg[1][b])[r, c]
        return T

    def _local(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return ((x - self.geometry.centroid) @ self.R - self.mid) / self.half

    def __call__(self, x) -> np.ndarray:
        y = self._local(x)
        V1 = legendre.legvander(y[..., 0], self.ell)
        V2 = legendre.legvander(y[..., 1], self.ell)
        return np.stack([V1[..., a] * V2[..., b] for a, b in self.exponents], axis=-1)

    def gradient(self, x) -> np.ndarray:
        """(..., 2, n): x- and y-derivatives of every member."""
        y = self._local(x)
        V1 = legendre.legvander(y[..., 0], self.ell)
        V2 = legendre.legvander(y[..., 1], self.ell)
        D1, D2 = V1 @ self.dmat, V2 @ self.dmat
        dy1 = np.stack([D1[..., a] * V2[..., b] for a, b in self.exponents], axis=-1)
        dy2 = np.stack([V1[..., a] * D2[..., b] for a, b in self.exponents], axis=-1)
        J = self.jac
        return np.stack([J[0, 0] * dy1 + J[0, 1] * dy2, J[1, 0] * dy1 + J[1, 1] * dy2], axis=-2)


def _assemble_boundary(geometry: ElementGeometry, ell: int, evaluate, n: int) -> np.ndarray:
    """Boundary term of B: edge integrals of the traction of each strain column against the hats."""
    N = geometry.n_vertices
    rule = gauss_legendre_1d(max(1, -(-(ell + 2) // 2)))
    i0, i1 = _edge_shape_integrals(geometry, rule, evaluate)  # (N, n)
    nrm = geometry.normals
    A1 = nrm[:, 0:1] * i0 + np.roll(nrm[:, 0:1] * i1, 1, axis=0)
    A2 = nrm[:, 1:2] * i0 + np.roll(nrm[:, 1:2] * i1, 1, axis=0)
    B = np.zeros((3 * n, 2 * N))
    B[0::3, :N] = A1.T
    B[2::3, :N] = A2.T
    B[1::3, N:] = A2.T
    B[2::3, N:] = A1.T
    return B


def _solve_blocks(gram: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Solve kron(gram, I3) X = B without forming the Kronecker product."""
    n = gram.shape[0]
    return np.linalg.solve(gram, B.reshape(n, -1)).reshape(B.shape)


def build_l2_strain_projector(
    geometry: ElementGeometry,
    C: np.ndarray | None,
    ell: int,
    Pi: np.ndarray,
    moments: MomentTable | None = None,
):
    """Assemble G, B and solve for the strain projector Pi_m (3n x 2N).

    The boundary part of B uses Gauss-Legendre with ceil((l + 2) / 2) points
    per edge.  The volume part needs integrals of the divergence of the strain
    basis against the virtual basis functions; those are replaced by
    integrals against their energy projections.

    G and B are formed in the scaled monomial basis.  The solve itself runs in
    a box-Legendre basis of the same space and is mapped back exactly, since
    the monomial Gram matrix loses most of its digits at high degree.
    Returns ``(G, B, Pi_m, gram, moments, stable)`` where ``stable`` holds the
    Legendre-basis Gram matrix and projector.  ``C`` is unused.
    """
    del C
    N = geometry.n_vertices
    basis = StrainPolyBasis(geometry, ell)
    n = basis.n_monomials
    if moments is None or moments.max_degree < 2 * ell:
        moments = monomial_moments(geometry, max(2 * ell, 1))
    exps = basis.exponents
    R = np.array([e[0] for e in exps])
    K = np.array([e[1] for e in exps])
    gram = moments.values[R[:, None] + R[None, :], K[:, None] + K[None, :]]
    G = np.kron(gram, np.eye(3))

    B = _assemble_boundary(geometry, ell, basis.monomials, n)
    if ell > 0:
        coef = basis.divergence_coefficients()  # (2, 3n, nq)
        lower = monomial_exponents(ell - 1)
        lin = [(0, 0), (1, 0), (0, 1)]
        W = np.array([[moments.values[r + a, k + b] for (a, b) in lin] for (r, k) in lower])
        D = np.einsum("cjq,cbs,qs->jb", coef, _LINEAR, W)  # (3n, 6)
        B = B - D @ Pi

    # same projection in the well-conditioned basis
    leg = BoxLegendreBasis(geometry, ell)
    pts, w = sbc_rule(geometry, sbc_order_for_degree(2 * ell) + 1)
    P = leg(pts)
    gram_p = (P * w[:, None]).T @ P
    B_p = _assemble_boundary(geometry, ell, leg, n)
    if ell > 0:
        grad = leg.gradient(pts)  # (q, 2, n)
        lin_vals = VectorLinearBasis(geometry)(pts)  # (q, 2, 6)
        div = np.zeros((len(pts), 2, 3 * n))
        div[:, 0, 0::3] = grad[:, 0]
        div[:, 1, 1::3] = grad[:, 1]
        div[:, 0, 2::3] = grad[:, 1]
        div[:, 1, 2::3] = grad[:, 0]
        D_p = sum((div[:, c] * w[:, None]).T @ lin_vals[:, c] for c in range(2))
        B_p = B_p - D_p @ Pi

    cond = np.linalg.cond(gram_p)
    if not np.isfinite(cond) or cond > GRAM_COND_WARN:
        warnings.warn(
            f"strain Gram matrix has condition number {cond:.2e} (l={ell}, N={N}); "
            "consider a lower degree or a finer mesh",
            stacklevel=2,
        )
    try:
        Pi_p = _solve_blocks(gram_p, B_p)
    except np.linalg.LinAlgError as exc:
        raise ProjectorError(f"singular strain Gram matrix (l={ell}, N={N})") from exc
    # the projector kills rigid motions exactly; strip the round-off it
    # picks up on them
    Q, _ = np.linalg.qr(VectorLinearBasis(geometry).at_vertices()[:, :3])
    Pi_p -= (Pi_p @ Q) @ Q.T
    Pi_m = (leg.T @ Pi_p.reshape(n, -1)).reshape(Pi_p.shape)
    Pi_m -= (Pi_m @ Q) @ Q.T
    return G, B, Pi_m, gram, moments, StableProjection(leg.T, gram_p, Pi_p)


@dataclass(frozen=True)
class StableProjection:
    """Strain projector in the box-Legendre basis; ``T`` maps its
    coefficients to scaled-monomial ones."""

    T: np.ndarray
    gram: np.ndarray
    Pi: np.ndarray


def build_projectors(geometry: ElementGeometry, C: np.ndarray, ell: int) -> ProjectorSet:
    G_tilde, B_tilde, Pi = build_energy_projector(geometry, C)
    moments = monomial_moments(geometry, max(2 * ell, 1))
    G, B, Pi_m, gram, moments, stable = build_l2_strain_projector(geometry, C, ell, Pi, moments)
    return ProjectorSet(geometry, ell, G_tilde, B_tilde, Pi, G, B, Pi_m, gram, moments, stable)


def project_displacement(pset: ProjectorSet, dofs, x) -> np.ndarray:
    """Energy-projected displacement at points ``x``: shape (..., 2)."""
    coeffs = pset.Pi @ np.asarray(dofs, dtype=float)
    return VectorLinearBasis(pset.geometry)(x) @ coeffs


def project_strain(pset: ProjectorSet, dofs, x) -> np.ndarray:
    """Projected Voigt strain (eps_xx, eps_yy, gamma_xy) at points ``x``: shape (..., 3)."""
    coeffs = pset.Pi_m @ np.asarray(dofs, dtype=float)
    return StrainPolyBasis(pset.geometry, pset.ell)(x) @ coeffs


def dump_projectors(pset: ProjectorSet, stream, label: str = "element") -> None:
    """Write the projector factors as plain-text matrix blocks."""
    stream.write(f"# {label} N={pset.geometry.n_vertices} ell={pset.ell}\n")
    for name in ("G_tilde", "B_tilde", "Pi", "G", "B", "Pi_m"):
        mat = getattr(pset, name)
        stream.write(f"{name} {mat.shape[0]} {mat.shape[1]}\n")
        for row in mat:
            stream.write(" ".join(f"{v:.17g}" for v in row) + "\n")
