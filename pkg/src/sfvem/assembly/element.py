"""Element-level matrices: stabilization-free stiffness, the stabilized
baseline, and load vectors."""

from __future__ import annotations

import numpy as np

from ..geometry.polygon import ElementGeometry
from .material import MaterialModel
from ..polyspace import DegreePolicy, VectorLinearBasis, select_degree
from ..projectors import ProjectorSet, build_energy_projector, build_l2_strain_projector, build_projectors
from ..quadrature import gauss_legendre_1d

ZERO_EIG_TOL = 1e-9


class RankDeficiencyError(RuntimeError):
    pass


def element_stiffness(geometry: ElementGeometry, material: MaterialModel, ell: int | None = None, projectors: ProjectorSet | None = None) -> np.ndarray:
    """K_E = Pi_m^T H Pi_m with H the integral of N_p^T C N_p."""
    if projectors is None:
        projectors = build_projectors(geometry, material.C, ell)
    elif ell is not None and projectors.ell != ell:
        raise ValueError(f"projectors were built for l={projectors.ell}, not l={ell}")
    # the Legendre-basis factors give the same matrix with far less round-off
    st = projectors.stable
    gram, Pi_m = (st.gram, st.Pi) if st is not None else (projectors.gram, projectors.Pi_m)
    K = Pi_m.T @ np.kron(gram, material.C) @ Pi_m
    return 0.5 * (K + K.T)


def count_small_eigenvalues(K: np.ndarray, tol_rel: float = ZERO_EIG_TOL) -> int:
    lam = np.linalg.eigvalsh(K)
    return int(np.sum(lam < tol_rel * lam[-1]))


def element_with_policy(geometry: ElementGeometry, material: MaterialModel, policy: DegreePolicy = DegreePolicy()):
    """Pick the degree for this cell, build its projectors and stiffness.

    Returns ``(K_E, projectors)``.  Under the ``verified`` policy the degree
    is raised until K_E has exactly three near-zero eigenvalues.
    """
    cache: dict[int, tuple] = {}

    def build(ell):
        if ell not in cache:
            ps = build_projectors(geometry, material.C, ell)
            cache[ell] = (element_stiffness(geometry, material, projectors=ps), ps)
        return cache[ell]

    def rank_ok(ell):
        return count_small_eigenvalues(build(ell)[0]) == 3

    try:
        ell = select_degree(geometry.n_vertices, policy, rank_ok=rank_ok)
    except RuntimeError as exc:
        raise RankDeficiencyError(str(exc)) from None
    return build(ell)


def element_stiffness_stabilized(geometry: ElementGeometry, material: MaterialModel) -> np.ndarray:
    """Standard first-order VEM: constant-strain consistency plus stabilization.

    The stabilization is tau * (I - P)^T (I - P), where P maps DOFs to the
    vertex values of their energy projection and tau is half the trace of
    the consistency matrix.
    """
    _, _, Pi = build_energy_projector(geometry, material.C)
    _, _, Pi0, gram, _, _ = build_l2_strain_projector(geometry, material.C, 0, Pi)
    K_c = Pi0.T @ np.kron(gram, material.C) @ Pi0
    P = VectorLinearBasis(geometry).at_vertices() @ Pi
    I_P = np.eye(P.shape[0]) - P
    tau = 0.5 * np.trace(K_c)
    K = K_c + tau * I_P.T @ I_P
    return 0.5 * (K + K.T)


def element_body_force(geometry: ElementGeometry, f) -> np.ndarray:
    """|E| / N * f(x_E) on every vertex (block order)."""
    N = geometry.n_vertices
    if f is None:
        return np.zeros(2 * N)
    fc = np.asarray(f(geometry.centroid[None, :]), dtype=float).reshape(2)
    share = geometry.area / N
    return np.concatenate([np.full(N, share * fc[0]), np.full(N, share * fc[1])])


def edge_traction(p0, p1, normal, traction, n_points: int = 3) -> np.ndarray:
    """Consistent nodal forces (f0x, f0y, f1x, f1y) of a traction on one edge.

    ``traction`` is a constant 2-vector or a callable ``t(points, normals)``;
    callables are integrated against the linear trace with Gauss-Legendre.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    length = float(np.hypot(*(p1 - p0)))
    if not callable(traction):
        t = np.asarray(traction, dtype=float).reshape(2)
        return 0.5 * length * np.concatenate([t, t])
    rule = gauss_legendre_1d(n_points)
    s = 0.5 * (1.0 + rule.nodes)
    pts = p0 + s[:, None] * (p1 - p0)
    nrm = np.broadcast_to(np.asarray(normal, dtype=float), pts.shape)
    tv = np.asarray(traction(pts, nrm), dtype=float).reshape(len(s), 2)
    w = 0.5 * length * rule.weights
    f0 = ((w * (1.0 - s))[:, None] * tv).sum(0)
    f1 = ((w * s)[:, None] * tv).sum(0)
    return np.concatenate([f0, f1])


def element_force(geometry: ElementGeometry, f=None, traction_edges=()) -> np.ndarray:
    """Body-force and traction load vector in block DOF order.

    ``traction_edges`` is an iterable of ``(local_edge_index, traction)``
    where edge ``k`` runs from local vertex k to k + 1.
    """
    N = geometry.n_vertices
    F = element_body_force(geometry, f)
    for k, t in traction_edges:
        a, b = k, (k + 1) % N
        p0, p1 = geometry.vertices[a], geometry.vertices[b]
        fe = edge_traction(p0, p1, geometry.normals[k], t)
        F[a] += fe[0]
        F[N + a] += fe[1]
        F[b] += fe[2]
        F[N + b] += fe[3]
    return F
