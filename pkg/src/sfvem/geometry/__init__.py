from .domains import Annulus, DomainSDF, QuarterPlateWithHole, Rectangle
from .mesh import (
    MeshError,
    PolyMesh,
    central_quad_mesh,
    generate_structured_quads,
    mark_boundary,
    single_cell_mesh,
    split_quads_nonconvex,
)
from .meshio import MeshFormatError, load_mesh, save_mesh
from .polygon import (
    ElementGeometry,
    GeometryError,
    interior_angles,
    is_simple,
    polygon_metrics,
    regular_polygon,
    signed_area,
    triangulate_fan,
)
from .voronoi import MeshGenerationError, generate_voronoi_lloyd

__all__ = [
    "Annulus",
    "DomainSDF",
    "ElementGeometry",
    "GeometryError",
    "MeshError",
    "MeshFormatError",
    "MeshGenerationError",
    "PolyMesh",
    "QuarterPlateWithHole",
    "Rectangle",
    "central_quad_mesh",
    "generate_structured_quads",
    "generate_voronoi_lloyd",
    "interior_angles",
    "is_simple",
    "load_mesh",
    "mark_boundary",
    "polygon_metrics",
    "regular_polygon",
    "save_mesh",
    "signed_area",
    "single_cell_mesh",
    "split_quads_nonconvex",
    "triangulate_fan",
]
