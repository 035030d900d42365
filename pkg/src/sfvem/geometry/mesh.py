"""Polygonal meshes and the structured generators used by the benchmarks."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .polygon import ElementGeometry, GeometryError, is_simple, polygon_metrics, signed_area


class MeshError(ValueError):
    """Raised when a mesh violates its structural invariants."""


@dataclass(frozen=True, eq=False)
class PolyMesh:
    """Vertices, counter-clockwise cells and marked boundary edges.

    ``boundary_edges`` holds ``(i, j, marker)`` with ``i -> j`` following the
    orientation of the owning cell.
    """

    vertices: np.ndarray
    cells: tuple[tuple[int, ...], ...]
    boundary_edges: tuple[tuple[int, int, str], ...] = field(default=())

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cells", tuple(tuple(int(i) for i in c) for c in self.cells))
        object.__setattr__(
            self,
            "boundary_edges",
            tuple((int(i), int(j), str(m)) for i, j, m in self.boundary_edges),
        )

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cell_vertices(self, c: int) -> np.ndarray:
        return self.vertices[list(self.cells[c])]

    @cached_property
    def geometries(self) -> tuple[ElementGeometry, ...]:
        return tuple(polygon_metrics(self.cell_vertices(c), strict=True) for c in range(self.n_cells))

    def geometry(self, c: int) -> ElementGeometry:
        return self.geometries[c]

    @cached_property
    def h_max(self) -> float:
        return max(g.diameter for g in self.geometries)

    def total_area(self) -> float:
        return float(sum(g.area for g in self.geometries))

    def markers(self) -> set[str]:
        return {m for _, _, m in self.boundary_edges}

    def marker_vertices(self, marker: str) -> np.ndarray:
        ids = {i for i, j, m in self.boundary_edges if m == marker} | {
            j for i, j, m in self.boundary_edges if m == marker
        }
        return np.array(sorted(ids), dtype=int)

    def boundary_vertex_set(self) -> np.ndarray:
        ids = {i for i, _, _ in self.boundary_edges} | {j for _, j, _ in self.boundary_edges}
        return np.array(sorted(ids), dtype=int)

    def connectivity_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        for c in self.cells:
            h.update(np.asarray(c, dtype=np.int64).tobytes())
            h.update(b"|")
        for i, j, m in self.boundary_edges:
            h.update(f"{i},{j},{m};".encode())
        return h.hexdigest()

    def validate(self, check_simple: bool = True) -> None:
        """Raise :class:`MeshError` if any structural invariant fails."""
        nv = self.n_vertices
        directed: dict[tuple[int, int], int] = {}
        for c, cell in enumerate(self.cells):
            if len(cell) < 3:
                raise MeshError(f"cell {c} has fewer than 3 vertices")
            if min(cell) < 0 or max(cell) >= nv:
                raise MeshError(f"cell {c} references a vertex index outside [0, {nv})")
            if len(set(cell)) != len(cell):
                raise MeshError(f"cell {c} repeats a vertex")
            pts = self.vertices[list(cell)]
            if signed_area(pts) <= 0:
                raise MeshError(f"cell {c} is not counter-clockwise or has zero area")
            if check_simple and not is_simple(pts):
                raise MeshError(f"cell {c} is self-intersecting")
            for k in range(len(cell)):
                e = (cell[k], cell[(k + 1) % len(cell)])
                if e in directed:
                    raise MeshError(f"edge {e} appears twice with the same orientation")
                directed[e] = c

        boundary = {}
        for i, j, m in self.boundary_edges:
            if (i, j) not in directed:
                raise MeshError(f"boundary edge ({i}, {j}) [{m}] is not a cell edge")
            boundary[(i, j)] = m
        for (i, j) in directed:
            twin = (j, i) in directed
            marked = (i, j) in boundary
            if twin and marked:
                raise MeshError(f"interior edge ({i}, {j}) carries a boundary marker")
            if not twin and not marked:
                raise MeshError(f"edge ({i}, {j}) of cell {directed[(i, j)]} is unmatched and unmarked")


def mark_boundary(vertices: np.ndarray, cells, marker_fn) -> tuple[tuple[int, int, str], ...]:
    """Find edges used by one cell only and label them with ``marker_fn(midpoints)``."""
    directed = set()
    for cell in cells:
        for k in range(len(cell)):
            directed.add((cell[k], cell[(k + 1) % len(cell)]))
    free = [e for e in directed if (e[1], e[0]) not in directed]
    free.sort()
    if not free:
        return ()
    ends = np.array(free)
    mids = 0.5 * (vertices[ends[:, 0]] + vertices[ends[:, 1]])
    labels = marker_fn(mids)
    return tuple((int(i), int(j), str(m)) for (i, j), m in zip(free, labels))


def _rect_marker(x0, x1, y0, y1):
    def fn(p):
        d = np.column_stack([np.abs(p[:, 1] - y0), np.abs(p[:, 0] - x1), np.abs(p[:, 1] - y1), np.abs(p[:, 0] - x0)])
        names = np.array(["bottom", "right", "top", "left"])
        return list(names[np.argmin(d, axis=1)])

    return fn


def generate_structured_quads(rect=(0.0, 1.0, 0.0, 1.0), nx: int = 1, ny: int = 1) -> PolyMesh:
    """Uniform nx-by-ny grid of axis-aligned quads on ``rect = (x0, x1, y0, y1)``."""
    if int(nx) < 1 or int(ny) < 1:
        raise MeshError(f"cell counts must be positive, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    x0, x1, y0, y1 = rect
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = [
        (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)) for j in range(ny) for i in range(nx)
    ]
    bnd = mark_boundary(verts, cells, _rect_marker(x0, x1, y0, y1))
    return PolyMesh(verts, tuple(cells), bnd)


# Zig-zag cut used to split a quad into two heptagons, in the quad's
# bilinear parameter space (s along the bottom edge, t upward).  The cut runs
# from the bottom midpoint to the top midpoint through three interior points
# at t = 1/4, 1/2, 3/4 that alternate sides of the midline.
ZIGZAG_T = (0.25, 0.5, 0.75)
ZIGZAG_OFFSET = 0.2


def _bilinear(quad: np.ndarray, s: float, t: float) -> np.ndarray:
    a, b, c, d = quad
    return (1 - s) * (1 - t) * a + s * (1 - t) * b + s * t * c + (1 - s) * t * d


def split_quads_nonconvex(mesh: PolyMesh, offset: float = ZIGZAG_OFFSET) -> PolyMesh:
    """Split every quad into two nonconvex heptagons along a zig-zag cut.

    Edge midpoints are shared between neighbouring quads, so a conforming
    quad mesh stays conforming.  Boundary markers are inherited from the
    edge that was halved.
    """
    verts = [tuple(p) for p in mesh.vertices]
    index: dict[tuple[float, float], int] = {p: k for k, p in enumerate(verts)}
    midpoint_of: dict[tuple[int, int], int] = {}

    def add(p) -> int:
        key = (float(p[0]), float(p[1]))
        if key not in index:
            index[key] = len(verts)
            verts.append(key)
        return index[key]

    def mid(i, j) -> int:
        key = (min(i, j), max(i, j))
        if key not in midpoint_of:
            midpoint_of[key] = add(0.5 * (mesh.vertices[i] + mesh.vertices[j]))
        return midpoint_of[key]

    s_vals = [0.5 + offset, 0.5 - offset, 0.5 + offset]
    cells = []
    for c, cell in enumerate(mesh.cells):
        if len(cell) != 4:
            raise MeshError(f"cell {c} has {len(cell)} vertices; only quads can be split")
        a, b, cc, d = cell
        quad = mesh.vertices[list(cell)]
        mb = mid(a, b)
        mt = mid(cc, d)
        inner = [add(_bilinear(quad, s, t)) for s, t in zip(s_vals, ZIGZAG_T)]
        # left piece: a -> mb -> zigzag up -> mt -> d
        cells.append((a, mb, *inner, mt, d))
        # right piece: b -> c -> mt -> zigzag down -> mb
        cells.append((b, cc, mt, *inner[::-1], mb))

    vertices = np.array(verts)
    old_marker = {}
    for i, j, m in mesh.boundary_edges:
        old_marker[(min(i, j), max(i, j))] = m
    inherited = {}
    for key, mid_id in midpoint_of.items():
        if key in old_marker:
            inherited[(key[0], mid_id)] = old_marker[key]
            inherited[(key[1], mid_id)] = old_marker[key]

    directed = set()
    for cell in cells:
        for k in range(len(cell)):
            directed.add((cell[k], cell[(k + 1) % len(cell)]))
    bnd = []
    for i, j in sorted(e for e in directed if (e[1], e[0]) not in directed):
        m = inherited.get((i, j)) or inherited.get((j, i)) or old_marker.get((min(i, j), max(i, j)))
        if m is None:
            raise MeshError(f"split produced an unmarked boundary edge ({i}, {j})")
        bnd.append((i, j, m))
    return PolyMesh(vertices, tuple(cells), tuple(bnd))


CENTRAL_EDGE_PATTERN = (0, 2, 0)


def central_quad_mesh(n_nodes: int, side: float = 1.0, pattern=CENTRAL_EDGE_PATTERN) -> PolyMesh:
    """3x3 quad mesh of the square whose central cell carries ``n_nodes`` vertices.

    Extra nodes are dealt to the central cell's edges (0 bottom, 1 right,
    2 top, 3 left) by cycling through ``pattern`` and are spaced uniformly
    along each edge.  The default (bottom, top, bottom) keeps the spurious
    counts monotone in ``n_nodes``; a symmetric round-robin does not.  The
    neighbouring cells receive the same nodes so the mesh stays conforming.
    """
    if n_nodes < 4:
        raise MeshError("the central quadrilateral needs at least 4 nodes")
    base = generate_structured_quads((0.0, side, 0.0, side), 3, 3)
    extra = n_nodes - 4
    per_edge = [0, 0, 0, 0]
    for m in range(extra):
        per_edge[pattern[m % len(pattern)]] += 1

    verts = [p for p in base.vertices]
    centre = list(base.cells[4])
    new_centre = []
    inserted: dict[tuple[int, int], list[int]] = {}
    for k in range(4):
        i, j = centre[k], centre[(k + 1) % 4]
        ids = []
        for m in range(1, per_edge[k] + 1):
            frac = m / (per_edge[k] + 1)
            verts.append((1 - frac) * base.vertices[i] + frac * base.vertices[j])
            ids.append(len(verts) - 1)
        inserted[(i, j)] = ids
        new_centre.extend([i, *ids])

    cells = []
    for c, cell in enumerate(base.cells):
        if c == 4:
            cells.append(tuple(new_centre))
            continue
        out = []
        for k in range(len(cell)):
            i, j = cell[k], cell[(k + 1) % len(cell)]
            out.append(i)
            if (j, i) in inserted:
                out.extend(inserted[(j, i)][::-1])
        cells.append(tuple(out))
    vertices = np.array(verts)
    bnd = mark_boundary(vertices, cells, _rect_marker(0.0, side, 0.0, side))
    return PolyMesh(vertices, tuple(cells), bnd)


def single_cell_mesh(vertices, marker: str = "boundary") -> PolyMesh:
    v = np.asarray(vertices, dtype=float)
    cell = tuple(range(len(v)))
    if signed_area(v) < 0:
        cell = cell[::-1]
    bnd = tuple((cell[k], cell[(k + 1) % len(cell)], marker) for k in range(len(cell)))
    return PolyMesh(v, (cell,), bnd)


__all__ = [
    "GeometryError",
    "MeshError",
    "PolyMesh",
    "central_quad_mesh",
    "generate_structured_quads",
    "mark_boundary",
    "single_cell_mesh",
    "split_quads_nonconvex",
]
