"""Signed-distance descriptions of the benchmark domains.

Each domain knows its bounding box, a polygonal approximation of itself
(curved arcs sampled with at least 64 points), the points that must survive
boundary decimation (corners), and how to name the boundary part nearest to
a given point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import shapely

MIN_ARC_POINTS = 64


class DomainSDF:
    """Base class: negative inside, positive outside."""

    bbox: tuple[float, float, float, float]

    def sdf(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def polygon(self) -> shapely.Polygon:
        raise NotImplementedError

    def corners(self) -> np.ndarray:
        return np.empty((0, 2))

    def marker(self, p: np.ndarray) -> list[str]:
        raise NotImplementedError

    def area(self) -> float:
        """Exact area of the analytical domain."""
        raise NotImplementedError

    def gradient(self, p: np.ndarray, step: float = 1e-7) -> np.ndarray:
        p = np.atleast_2d(np.asarray(p, dtype=float))
        ex = np.array([step, 0.0])
        ey = np.array([0.0, step])
        gx = (self.sdf(p + ex) - self.sdf(p - ex)) / (2 * step)
        gy = (self.sdf(p + ey) - self.sdf(p - ey)) / (2 * step)
        return np.column_stack([gx, gy])


def _box_sdf(p, x0, x1, y0, y1):
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    hx, hy = 0.5 * (x1 - x0), 0.5 * (y1 - y0)
    qx = np.abs(p[:, 0] - cx) - hx
    qy = np.abs(p[:, 1] - cy) - hy
    outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
    inside = np.minimum(np.maximum(qx, qy), 0.0)
    return outside + inside


def _nearest_label(dists: dict[str, np.ndarray]) -> list[str]:
    names = list(dists)
    stack = np.column_stack([np.abs(dists[k]) for k in names])
    return [names[i] for i in np.argmin(stack, axis=1)]


@dataclass(frozen=True)
class Rectangle(DomainSDF):
    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("rectangle bounds must satisfy x1 > x0 and y1 > y0")

    @property
    def bbox(self):
        return (self.x0, self.x1, self.y0, self.y1)

    def sdf(self, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return _box_sdf(p, self.x0, self.x1, self.y0, self.y1)

    def polygon(self):
        return shapely.box(self.x0, self.y0, self.x1, self.y1)

    def corners(self):
        return np.array(
            [[self.x0, self.y0], [self.x1, self.y0], [self.x1, self.y1], [self.x0, self.y1]]
        )

    def marker(self, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return _nearest_label(
            {
                "bottom": p[:, 1] - self.y0,
                "right": p[:, 0] - self.x1,
                "top": p[:, 1] - self.y1,
                "left": p[:, 0] - self.x0,
            }
        )

    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)


def _arc(center, radius, t0, t1, n):
    t = np.linspace(t0, t1, n)
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


@dataclass(frozen=True)
class QuarterPlateWithHole(DomainSDF):
    """[0, L]^2 with the disk r < a around the origin removed."""

    length: float = 5.0
    radius: float = 1.0
    arc_points: int = 128

    def __post_init__(self):
        if not 0 < self.radius < self.length:
            raise ValueError("hole radius must lie in (0, L)")
        if self.arc_points < MIN_ARC_POINTS:
            raise ValueError(f"arc_points must be >= {MIN_ARC_POINTS}")

    @property
    def bbox(self):
        return (0.0, self.length, 0.0, self.length)

    def sdf(self, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        box = _box_sdf(p, 0.0, self.length, 0.0, self.length)
        hole = self.radius - np.hypot(p[:, 0], p[:, 1])
        return np.maximum(box, hole)

    def polygon(self):
        a, L = self.radius, self.length
        hole = _arc((0.0, 0.0), a, 0.5 * np.pi, 0.0, self.arc_points)
        pts = np.vstack([[[L, 0.0], [L, L], [0.0, L]], hole])
        return shapely.Polygon(pts)

    def corners(self):
        a, L = self.radius, self.length
        return np.array([[a, 0.0], [L, 0.0], [L, L], [0.0, L], [0.0, a]])

    def marker(self, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        return _nearest_label(
            {
                "bottom": p[:, 1],
                "right": p[:, 0] - self.length,
                "top": p[:, 1] - self.length,
                "left": p[:, 0],
                "hole": np.hypot(p[:, 0], p[:, 1]) - self.radius,
            }
        )

    def area(self):
        return self.length**2 - 0.25 * np.pi * self.radius**2


@dataclass(frozen=True)
class Annulus(DomainSDF):
    """a < r < b around ``center``; ``quarter=True`` keeps only the first quadrant."""

    inner: float = 1.0
    outer: float = 5.0
    center: tuple[float, float] = (0.0, 0.0)
    arc_points: int = 256
    quarter: bool = False

    def __post_init__(self):
        if not 0 < self.inner < self.outer:
            raise ValueError("radii must satisfy 0 < inner < outer")
        if self.arc_points < MIN_ARC_POINTS:
            raise ValueError(f"arc_points must be >= {MIN_ARC_POINTS}")

    @property
    def bbox(self):
        cx, cy = self.center
        b = self.outer
        if self.quarter:
            return (cx, cx + b, cy, cy + b)
        return (cx - b, cx + b, cy - b, cy + b)

    def _r(self, p):
        return np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1])

    def sdf(self, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        r = self._r(p)
        d = np.maximum(r - self.outer, self.inner - r)
        if self.quarter:
            d = np.maximum(d, np.maximum(self.center[0] - p[:, 0], self.center[1] - p[:, 1]))
        return d

    def polygon(self):
        a, b, c = self.inner, self.outer, self.center
        if self.quarter:
            outer = _arc(c, b, 0.0, 0.5 * np.pi, self.arc_points)
            inner = _arc(c, a, 0.5 * np.pi, 0.0, self.arc_points)
            return shapely.Polygon(np.vstack([outer, inner]))
        n = self.arc_points
        outer = _arc(c, b, 0.0, 2 * np.pi, n + 1)[:-1]
        inner = _arc(c, a, 0.0, 2 * np.pi, n + 1)[:-1]
        return shapely.Polygon(outer, holes=[inner[::-1]])

    def corners(self):
        if not self.quarter:
            return np.empty((0, 2))
        cx, cy = self.center
        a, b = self.inner, self.outer
        return np.array([[cx + a, cy], [cx + b, cy], [cx, cy + b], [cx, cy + a]])

    def marker(self, p):
        p = np.atleast_2d(np.asarray(p, dtype=float))
        r = self._r(p)
        dists = {"inner": r - self.inner, "outer": r - self.outer}
        if self.quarter:
            dists["bottom"] = p[:, 1] - self.center[1]
            dists["left"] = p[:, 0] - self.center[0]
        return _nearest_label(dists)

    def area(self):
        full = np.pi * (self.outer**2 - self.inner**2)
        return 0.25 * full if self.quarter else full
