"""Single-polygon geometry: metrics, orientation and fan triangulation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Raised for degenerate or otherwise unusable polygons."""


@dataclass(frozen=True)
class ElementGeometry:
    """Derived data for one polygonal cell.

    ``normals[i]`` and ``edge_lengths[i]`` belong to the edge running from
    vertex ``i`` to vertex ``i + 1`` (cyclically).
    """

    vertices: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    edge_lengths: np.ndarray
    normals: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def perimeter(self) -> float:
        return float(self.edge_lengths.sum())

    def edge(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_vertices
        return self.vertices[i], self.vertices[(i + 1) % n]


def signed_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def is_simple(vertices) -> bool:
    """True when no two non-adjacent edges properly intersect."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(a, b, v[j], v[(j + 1) % n]):
                return False
    return True


def polygon_metrics(vertices, strict: bool = False) -> ElementGeometry:
    """Compute area, centroid, diameter, edge lengths and outward normals.

    Parameters
    ----------
    vertices : array_like, shape (N, 2)
        Polygon vertices, expected counter-clockwise.
    strict : bool
        If True a clockwise loop raises; otherwise it is reversed with a
        warning.
    """
    v = np.array(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
        raise GeometryError(f"need at least 3 two-dimensional vertices, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise GeometryError("non-finite vertex coordinates")

    diffs = v[:, None, :] - v[None, :, :]
    diameter = float(np.sqrt((diffs**2).sum(-1)).max())
    area = signed_area(v)
    if abs(area) <= 1e-14 * diameter**2:
        raise GeometryError(
            f"degenerate polygon: |area| = {abs(area):.3e} <= 1e-14 * h^2 (h = {diameter:.3e})"
        )
    if area < 0:
        if strict:
            raise GeometryError("polygon is clockwise")
        warnings.warn("clockwise polygon reoriented to counter-clockwise", stacklevel=2)
        v = v[::-1].copy()
        area = -area

    nxt = np.roll(v, -1, axis=0)
    cross = v[:, 0] * nxt[:, 1] - nxt[:, 0] * v[:, 1]
    centroid = np.array(
        [((v[:, 0] + nxt[:, 0]) * cross).sum(), ((v[:, 1] + nxt[:, 1]) * cross).sum()]
    ) / (6.0 * area)

    d = nxt - v
    lengths = np.hypot(d[:, 0], d[:, 1])
    if np.any(lengths == 0.0):
        raise GeometryError("repeated consecutive vertex (zero-length edge)")
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]

    for arr in (v, centroid, lengths, normals):
        arr.setflags(write=False)
    return ElementGeometry(v, float(area), centroid, diameter, lengths, normals)


def triangulate_fan(geometry: ElementGeometry, center=None) -> list[np.ndarray]:
    """Split the cell into triangles (x_i, x_{i+1}, center).

    ``center`` defaults to the centroid.  Every triangle must be positively
    oriented, i.e. the cell must be star-shaped with respect to ``center``.
    """
    c = geometry.centroid if center is None else np.asarray(center, dtype=float)
    v = geometry.vertices
    n = geometry.n_vertices
    tris = []
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        tri = np.array([a, b, c])
        if signed_area(tri) <= 1e-14 * geometry.diameter**2:
            raise GeometryError(
                f"cell is not star-shaped about {tuple(c)}: fan triangle at vertex {i} "
                f"{tuple(a)} is not positively oriented"
            )
        tris.append(tri)
    return tris


def regular_polygon(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> np.ndarray:
    """Vertices of a regular n-gon, counter-clockwise, first vertex on the +x axis."""
    if n < 3:
        raise GeometryError("a polygon needs at least 3 vertices")
    t = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def interior_angles(vertices) -> np.ndarray:
    """Interior angle at every vertex of a counter-clockwise polygon (radians)."""
    v = np.asarray(vertices, dtype=float)
    prev = np.roll(v, 1, axis=0) - v
    nxt = np.roll(v, -1, axis=0) - v
    cross = nxt[:, 0] * prev[:, 1] - nxt[:, 1] * prev[:, 0]
    dot = (nxt * prev).sum(1)
    ang = np.arctan2(cross, dot)
    return np.mod(ang, 2.0 * np.pi)
