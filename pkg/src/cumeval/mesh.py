"""
Triangle meshes and their conversion to 2.5D surface rasters.

The rasterizer samples each pixel at its center. A triangle covers a pixel
when the center lies inside or on the triangle's XY projection; the pixel
takes the highest barycentric-interpolated elevation among all covering
triangles. Triangles with zero XY area (vertical walls) are skipped.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cumeval.errors import ParseError
from cumeval.raster import DEFAULT_NODATA, GridSpec, RasterGrid, atomic_write_bytes

logger = logging.getLogger(__name__)

# XY area below this fraction of the squared triangle extent counts as zero.
_DEGENERATE_REL_AREA = 1e-14


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Vertices ``(n, 3)`` in world meters and 0-based triangle indices ``(m, 3)``."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        verts = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise ValueError(f"triangle index out of range for {len(verts)} vertices")
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)

    @classmethod
    def empty(cls) -> TriangleMesh:
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @classmethod
    def concat(cls, meshes: list[TriangleMesh]) -> TriangleMesh:
        verts, tris, base = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + base)
            base += len(m.vertices)
        if not verts:
            return cls.empty()
        return cls(np.concatenate(verts), np.concatenate(tris))

    def permuted(self, order: np.ndarray) -> TriangleMesh:
        return TriangleMesh(self.vertices, self.triangles[np.asarray(order)])


def rasterize_mesh(mesh: TriangleMesh, spec: GridSpec, nodata: float = DEFAULT_NODATA) -> RasterGrid:
    """Rasterize the top surface of ``mesh`` onto ``spec``.

    Pixels covered by no triangle are nodata. An empty mesh yields an
    all-nodata grid.
    """
    out = np.full(spec.shape, -np.inf)
    cs = spec.cell_size
    verts = mesh.vertices

    for tri in mesh.triangles:
        (x0, y0, z0), (x1, y1, z1), (x2, y2, z2) = verts[tri]
        area2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        extent = max(abs(x1 - x0), abs(x2 - x0), abs(y1 - y0), abs(y2 - y0))
        if extent == 0.0 or abs(area2) <= _DEGENERATE_REL_AREA * extent * extent:
            continue

        # Column/row windows whose centers can fall inside the XY bounding box.
        c_lo = max(int(np.ceil((min(x0, x1, x2) - spec.origin_x) / cs - 0.5)) - 1, 0)
        c_hi = min(int(np.floor((max(x0, x1, x2) - spec.origin_x) / cs - 0.5)) + 1, spec.width - 1)
        r_lo = max(int(np.ceil((spec.origin_y - max(y0, y1, y2)) / cs - 0.5)) - 1, 0)
        r_hi = min(int(np.floor((spec.origin_y - min(y0, y1, y2)) / cs - 0.5)) + 1, spec.height - 1)
        if c_lo > c_hi or r_lo > r_hi:
            continue

        px = spec.origin_x + (np.arange(c_lo, c_hi + 1) + 0.5) * cs
        py = spec.origin_y - (np.arange(r_lo, r_hi + 1) + 0.5) * cs
        px, py = np.meshgrid(px, py)
        w0, w1, w2 = _barycentric(px, py, x0, y0, x1, y1, x2, y2, area2)
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        if not inside.any():
            continue
        z = w0 * z0 + w1 * z1 + w2 * z2
        window = out[r_lo:r_hi + 1, c_lo:c_hi + 1]
        np.maximum(window, np.where(inside, z, -np.inf), out=window)

    out[np.isneginf(out)] = nodata
    return RasterGrid(spec, out, nodata)


def _barycentric(px, py, x0, y0, x1, y1, x2, y2, area2):
    """Barycentric weights of points ``(px, py)``; nonnegative inside for either winding."""
    e0 = (x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)
    e1 = (x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)
    e2 = (x0 - px) * (y1 - py) - (x1 - px) * (y0 - py)
    return e0 / area2, e1 / area2, e2 / area2


# ---------------------------------------------------------------------------
# Wavefront OBJ subset
# ---------------------------------------------------------------------------


def read_obj(path: str | os.PathLike) -> TriangleMesh:
    """Read ``v`` and ``f`` records from a Wavefront OBJ file.

    Polygonal faces are fan-triangulated. Face indices are 1-based; ``v/vt/vn``
    references use only the vertex part. Negative (relative) indices are not
    supported. Other record types are ignored.
    """
    path = Path(path)
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[list[int], int]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ParseError(f"{path}:{lineno}: vertex record needs 3 coordinates")
                try:
                    vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad vertex coordinate in {line.strip()!r}") from None
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise ParseError(f"{path}:{lineno}: face record needs at least 3 vertices")
                idx = []
                for token in parts[1:]:
                    head = token.split("/", 1)[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise ParseError(f"{path}:{lineno}: bad face index {token!r}") from None
                    if i < 0:
                        raise ParseError(f"{path}:{lineno}: negative face index {i} is not supported")
                    if i == 0:
                        raise ParseError(f"{path}:{lineno}: face index 0 is invalid (indices are 1-based)")
                    idx.append(i - 1)
                faces.append((idx, lineno))

    triangles = []
    for idx, lineno in faces:
        if max(idx) >= len(vertices):
            raise ParseError(f"{path}:{lineno}: face index {max(idx) + 1} exceeds vertex count {len(vertices)}")
        for k in range(1, len(idx) - 1):
            triangles.append((idx[0], idx[k], idx[k + 1]))
    logger.debug("read %d vertices, %d triangles from %s", len(vertices), len(triangles), path)
    return TriangleMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3),
                        np.array(triangles, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh: TriangleMesh, path: str | os.PathLike) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    atomic_write_bytes(Path(path), ("\n".join(lines) + "\n").encode("utf-8"))
