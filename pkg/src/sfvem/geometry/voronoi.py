"""Lloyd-relaxed Voronoi meshes clipped to a signed-distance domain."""

from __future__ import annotations

import logging

import numpy as np
import shapely
from scipy.spatial import Voronoi, cKDTree

from .domains import DomainSDF, Rectangle
from .mesh import MeshError, PolyMesh, mark_boundary
from .polygon import is_simple, signed_area

log = logging.getLogger(__name__)

MAX_SAMPLING_ROUNDS = 1000
SLIVER_FRACTION = 1e-6


class MeshGenerationError(MeshError):
    pass


def sample_seeds(domain: DomainSDF, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random points strictly inside ``domain`` (rejection sampling)."""
    x0, x1, y0, y1 = domain.bbox
    out = np.empty((0, 2))
    for _ in range(MAX_SAMPLING_ROUNDS):
        cand = np.column_stack([rng.uniform(x0, x1, 2 * n), rng.uniform(y0, y1, 2 * n)])
        cand = cand[domain.sdf(cand) < 0]
        out = np.vstack([out, cand])
        if len(out) >= n:
            return out[:n]
    raise MeshGenerationError(
        f"seed rejection sampling produced {len(out)} of {n} points in {MAX_SAMPLING_ROUNDS} rounds"
    )


def _reflect_inside(points: np.ndarray, domain: DomainSDF) -> np.ndarray:
    """Mirror points that left the domain back across the boundary."""
    d = domain.sdf(points)
    bad = d >= 0
    if not bad.any():
        return points
    p = points.copy()
    g = domain.gradient(p[bad])
    g /= np.maximum(np.linalg.norm(g, axis=1), 1e-300)[:, None]
    p[bad] = p[bad] - 2.0 * d[bad][:, None] * g
    still = domain.sdf(p) >= 0
    if still.any():
        poly = domain.polygon()
        for k in np.flatnonzero(still):
            p[k] = _nudge_inside(poly, points[k])
    return p


def _nudge_inside(poly, point):
    from shapely.ops import nearest_points

    q = np.asarray(nearest_points(poly, shapely.Point(point))[0].coords[0])
    c = np.asarray(poly.representative_point().coords[0])
    return q + 1e-6 * (c - q)


def _voronoi_cells(seeds: np.ndarray, bbox) -> list[np.ndarray]:
    """Bounded Voronoi cells of ``seeds`` inside the bounding box.

    Mirroring every seed across the four box sides makes each original cell
    finite and confines it to the box.
    """
    x0, x1, y0, y1 = bbox
    mirrors = [
        np.column_stack([2 * x0 - seeds[:, 0], seeds[:, 1]]),
        np.column_stack([2 * x1 - seeds[:, 0], seeds[:, 1]]),
        np.column_stack([seeds[:, 0], 2 * y0 - seeds[:, 1]]),
        np.column_stack([seeds[:, 0], 2 * y1 - seeds[:, 1]]),
    ]
    vor = Voronoi(np.vstack([seeds, *mirrors]))
    cells = []
    for i in range(len(seeds)):
        region = vor.regions[vor.point_region[i]]
        if not region or -1 in region:
            raise MeshGenerationError(f"unbounded Voronoi region for seed {i}")
        pts = vor.vertices[region]
        ang = np.arctan2(pts[:, 1] - seeds[i, 1], pts[:, 0] - seeds[i, 0])
        cells.append(pts[np.argsort(ang)])
    return cells


def _clip(cells: list[np.ndarray], domain: DomainSDF):
    polys = shapely.polygons([shapely.linearrings(c) for c in cells])
    dom = domain.polygon()
    if isinstance(domain, Rectangle):
        return list(polys), dom
    shapely.prepare(dom)
    inside = shapely.contains_properly(dom, polys)
    out = np.array(polys, dtype=object)
    cut = ~inside
    out[cut] = shapely.intersection(polys[cut], dom)
    return list(out), dom


def _pieces(geom) -> list:
    if geom.is_empty:
        return []
    if geom.geom_type == "Polygon":
        return [geom]
    if geom.geom_type in ("MultiPolygon", "GeometryCollection"):
        return [g for g in geom.geoms if g.geom_type == "Polygon" and not g.is_empty]
    return []


def _merge_slivers(polys: list, tol_area: float) -> list:
    big = [p for p in polys if p.area >= tol_area]
    small = [p for p in polys if p.area < tol_area]
    if not small:
        return polys
    log.warning("merging %d sliver cell piece(s) below area %.3e into neighbours", len(small), tol_area)
    tree = shapely.STRtree(big)
    for s in small:
        cand = tree.query(s)
        if len(cand) == 0:
            raise MeshGenerationError("isolated sliver cell could not be merged")
        shared = [big[k].boundary.intersection(s.boundary).length for k in cand]
        k = int(cand[int(np.argmax(shared))])
        merged = shapely.union(big[k], s)
        if merged.geom_type != "Polygon":
            raise MeshGenerationError("sliver merge produced a non-polygonal cell")
        big[k] = merged
        tree = shapely.STRtree(big)
    return big


def _polygons_to_mesh(polys: list, domain: DomainSDF, dom_poly, decimate: bool = True) -> PolyMesh:
    x0, x1, y0, y1 = domain.bbox
    tol = 1e-9 * np.hypot(x1 - x0, y1 - y0)

    loops = []
    for p in polys:
        if len(p.interiors):
            raise MeshGenerationError("a cell encloses a hole; use more cells")
        ring = np.asarray(p.exterior.coords)[:-1]
        if signed_area(ring) < 0:
            ring = ring[::-1]
        loops.append(ring)

    allpts = np.vstack(loops)
    for col, (lo, hi) in enumerate([(x0, x1), (y0, y1)]):
        allpts[np.abs(allpts[:, col] - lo) <= tol, col] = lo
        allpts[np.abs(allpts[:, col] - hi) <= tol, col] = hi
    tree = cKDTree(allpts)
    parent = np.arange(len(allpts))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in sorted(tree.query_pairs(tol)):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(a) for a in range(len(allpts))])
    uniq, inverse = np.unique(roots, return_inverse=True)
    vertices = allpts[uniq]

    cells = []
    offset = 0
    for ring in loops:
        ids = inverse[offset : offset + len(ring)]
        offset += len(ring)
        cell = [int(ids[0])]
        for k in ids[1:]:
            if k != cell[-1]:
                cell.append(int(k))
        if len(cell) > 1 and cell[-1] == cell[0]:
            cell.pop()
        if len(cell) >= 3:
            cells.append(cell)

    if decimate:
        cells = _decimate_boundary(vertices, cells, domain, dom_poly, tol)

    used = sorted({i for c in cells for i in c})
    remap = -np.ones(len(vertices), dtype=int)
    remap[used] = np.arange(len(used))
    vertices = vertices[used]
    cells = [tuple(int(remap[i]) for i in c) for c in cells]
    bnd = mark_boundary(vertices, cells, domain.marker)
    mesh = PolyMesh(vertices, tuple(cells), bnd)
    mesh.validate(check_simple=False)
    return mesh


def _decimate_boundary(vertices, cells, domain, dom_poly, tol):
    """Drop boundary sample points owned by a single cell.

    The arc between two points shared by neighbouring cells is replaced by a
    chord.  Domain corners are always kept.
    """
    owners = np.zeros(len(vertices), dtype=int)
    for c in cells:
        owners[c] += 1
    corners = domain.corners()
    keep = owners > 1
    if len(corners):
        d = cKDTree(corners).query(vertices)[0]
        keep |= d <= 10 * tol
    on_boundary = shapely.distance(shapely.points(vertices), dom_poly.boundary) <= 10 * tol
    keep |= ~on_boundary

    out = []
    for c in cells:
        reduced = [i for i in c if keep[i]]
        pts = vertices[reduced] if len(reduced) >= 3 else None
        if pts is not None and signed_area(pts) > 0 and is_simple(pts):
            out.append(reduced)
        else:
            out.append(c)
    return out


def generate_voronoi_lloyd(
    domain: DomainSDF,
    n_cells: int,
    n_lloyd: int = 3,
    seed: int = 0,
    decimate: bool = True,
) -> PolyMesh:
    """Clipped Voronoi mesh with ``n_lloyd`` Lloyd (centroid) iterations.

    Seeds start uniformly random inside the domain; a centroid that falls
    outside a nonconvex domain is reflected back across the boundary.  The
    result depends only on ``(domain, n_cells, n_lloyd, seed)``.
    """
    if int(n_cells) < 1:
        raise MeshGenerationError("n_cells must be >= 1")
    if int(n_lloyd) < 0:
        raise MeshGenerationError("n_lloyd must be >= 0")
    rng = np.random.default_rng(seed)
    seeds = sample_seeds(domain, int(n_cells), rng)

    for it in range(int(n_lloyd) + 1):
        clipped, dom_poly = _clip(_voronoi_cells(seeds, domain.bbox), domain)
        if it == n_lloyd:
            break
        cents = np.array([g.centroid.coords[0] if not g.is_empty else s for g, s in zip(clipped, seeds)])
        seeds = _reflect_inside(cents, domain)

    polys = [p for g in clipped for p in _pieces(g)]
    if len(polys) != len(clipped):
        log.info("clipping split cells: %d seeds gave %d pieces", len(clipped), len(polys))
    mean_area = dom_poly.area / max(len(polys), 1)
    polys = _merge_slivers(polys, SLIVER_FRACTION * mean_area)
    return _polygons_to_mesh(polys, domain, dom_poly, decimate=decimate)
