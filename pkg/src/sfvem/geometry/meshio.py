"""Line-oriented text format for polygonal meshes.

::

    sfvem-mesh 1
    vertices N
    x y            (N lines, repr precision)
    cells M
    k i1 ... ik    (M lines, 0-based)
    boundary B
    i j marker     (B lines)
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import MeshError, PolyMesh

HEADER = "sfvem-mesh 1"


class MeshFormatError(MeshError):
    def __init__(self, msg: str, line: int | None = None, path=None):
        where = f"{path}:" if path else ""
        where += f"{line}: " if line is not None else ""
        super().__init__(where + msg)
        self.line = line


def save_mesh(mesh: PolyMesh, path) -> None:
    lines = [HEADER, f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"cells {mesh.n_cells}")
    lines += [" ".join(map(str, (len(c), *c))) for c in mesh.cells]
    lines.append(f"boundary {len(mesh.boundary_edges)}")
    lines += [f"{i} {j} {m}" for i, j, m in mesh.boundary_edges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mesh(path, validate: bool = True) -> PolyMesh:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    pos = 0

    def take() -> tuple[int, list[str]]:
        nonlocal pos
        while pos < len(text):
            pos += 1
            raw = text[pos - 1].strip()
            if raw and not raw.startswith("#"):
                return pos, raw.split()
        raise MeshFormatError("unexpected end of file", pos, path)

    def section(name: str) -> int:
        ln, tok = take()
        if len(tok) != 2 or tok[0] != name:
            raise MeshFormatError(f"expected '{name} <count>', got {' '.join(tok)!r}", ln, path)
        try:
            n = int(tok[1])
        except ValueError:
            raise MeshFormatError(f"bad {name} count {tok[1]!r}", ln, path) from None
        if n < 0:
            raise MeshFormatError(f"negative {name} count", ln, path)
        return n

    ln, tok = take()
    if " ".join(tok) != HEADER:
        raise MeshFormatError(f"missing header {HEADER!r}", ln, path)

    nv = section("vertices")
    verts = np.empty((nv, 2))
    for k in range(nv):
        ln, tok = take()
        if len(tok) != 2:
            raise MeshFormatError(f"vertex {k}: expected 2 coordinates, got {len(tok)}", ln, path)
        try:
            verts[k] = [float(tok[0]), float(tok[1])]
        except ValueError:
            raise MeshFormatError(f"vertex {k}: non-numeric coordinate", ln, path) from None

    nc = section("cells")
    cells = []
    for c in range(nc):
        ln, tok = take()
        try:
            vals = [int(t) for t in tok]
        except ValueError:
            raise MeshFormatError(f"cell {c}: non-integer field", ln, path) from None
        if not vals or vals[0] != len(vals) - 1:
            raise MeshFormatError(f"cell {c}: vertex count does not match the index list", ln, path)
        idx = vals[1:]
        bad = [i for i in idx if i < 0 or i >= nv]
        if bad:
            raise MeshFormatError(f"cell {c}: vertex index {bad[0]} out of range [0, {nv})", ln, path)
        cells.append(tuple(idx))

    nb = section("boundary")
    bnd = []
    for b in range(nb):
        ln, tok = take()
        if len(tok) != 3:
            raise MeshFormatError(f"boundary edge {b}: expected 'i j marker'", ln, path)
        try:
            i, j = int(tok[0]), int(tok[1])
        except ValueError:
            raise MeshFormatError(f"boundary edge {b}: non-integer index", ln, path) from None
        if not (0 <= i < nv and 0 <= j < nv):
            raise MeshFormatError(f"boundary edge {b}: vertex index out of range", ln, path)
        bnd.append((i, j, tok[2]))

    mesh = PolyMesh(verts, tuple(cells), tuple(bnd))
    if validate:
        mesh.validate()
    return mesh
