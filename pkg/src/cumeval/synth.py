"""
Synthetic building scenes with exact ground truth.

A scene is a flat ground plane carrying rectangular buildings with flat,
shed, gable or hip roofs. :func:`generate` produces the label mask, the DSM
sampled analytically at pixel centers (plus optional Gaussian noise), a
triangle mesh of the same surfaces and the analytic normal of every pixel.

Roof geometry over a footprint ``[x0, x1] x [y0, y1]`` with eave elevation
``e`` and pitch ``t`` (rise over run):

- flat: ``z = e``
- shed: one plane rising by ``t`` per meter across the ridge axis, lowest
  at the ``x0`` edge (ridge axis ``y``) or the ``y0`` edge (ridge axis ``x``)
- gable: ``z = e + t * (half_span - |u - u_mid|)`` where ``u`` is the
  coordinate across the ridge
- hip: ``z = e + t * (distance to the nearest footprint edge)``

Noise is drawn from a Philox4x64 counter-based generator seeded with the
scene seed. Consecutive raw 64-bit words ``a, b`` become uniforms
``u = ((a >> 11) + 1) * 2**-53`` in (0, 1], and each pair yields two normal
deviates by Box-Muller; deviates are assigned to pixels in row-major order.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from cumeval.errors import ParseError
from cumeval.mesh import TriangleMesh
from cumeval.normals import DEFAULT_NORMAL_RADIUS, NormalField
from cumeval.raster import GridSpec, LabelMask, RasterGrid

RoofKind = Literal["flat", "shed", "gable", "hip"]
ROOF_KINDS = ("flat", "shed", "gable", "hip")


@dataclass(frozen=True)
class Building:
    """One rectangular building. ``footprint`` is ``(x0, y0, x1, y1)`` in world meters."""

    footprint: tuple[float, float, float, float]
    roof: RoofKind = "flat"
    eave_height: float = 10.0
    pitch: float = 0.0
    ridge_axis: Literal["x", "y"] = "y"

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = (float(v) for v in self.footprint)
        object.__setattr__(self, "footprint", (x0, y0, x1, y1))
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"footprint {self.footprint} must have x1 > x0 and y1 > y0")
        if self.roof not in ROOF_KINDS:
            raise ValueError(f"unknown roof kind {self.roof!r}")
        if self.pitch < 0:
            raise ValueError(f"pitch must be >= 0, got {self.pitch}")
        if self.ridge_axis not in ("x", "y"):
            raise ValueError(f"ridge_axis must be 'x' or 'y', got {self.ridge_axis!r}")

    def roof_height(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Analytic roof elevation at world points (inside the footprint)."""
        x0, y0, x1, y1 = self.footprint
        e, t = self.eave_height, self.pitch
        if self.roof == "flat":
            return np.full(np.broadcast(x, y).shape, e)
        if self.roof == "shed":
            return e + t * ((x - x0) if self.ridge_axis == "y" else (y - y0))
        if self.roof == "gable":
            if self.ridge_axis == "y":
                return e + t * (0.5 * (x1 - x0) - np.abs(x - 0.5 * (x0 + x1)))
            return e + t * (0.5 * (y1 - y0) - np.abs(y - 0.5 * (y0 + y1)))
        return e + t * np.minimum(np.minimum(x - x0, x1 - x), np.minimum(y - y0, y1 - y))

    def roof_normal(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Analytic upward unit normal ``(..., 3)`` of the roof plane at each point."""
        x0, y0, x1, y1 = self.footprint
        t = self.pitch
        shape = np.broadcast(x, y).shape
        gx = np.zeros(shape)
        gy = np.zeros(shape)
        if self.roof == "shed":
            if self.ridge_axis == "y":
                gx[...] = t
            else:
                gy[...] = t
        elif self.roof == "gable":
            if self.ridge_axis == "y":
                gx = np.where(x < 0.5 * (x0 + x1), t, -t) * np.ones(shape)
            else:
                gy = np.where(y < 0.5 * (y0 + y1), t, -t) * np.ones(shape)
        elif self.roof == "hip":
            d = np.stack(np.broadcast_arrays(x - x0, x1 - x, y - y0, y1 - y))
            face = np.argmin(d, axis=0)
            gx = np.select([face == 0, face == 1], [t, -t], 0.0)
            gy = np.select([face == 2, face == 3], [t, -t], 0.0)
        n = np.stack([-gx, -gy, np.ones(shape)], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def creases(self) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        """XY segments where the surface is not smooth: footprint edges, ridges and hips."""
        x0, y0, x1, y1 = self.footprint
        segs = [((x0, y0), (x1, y0)), ((x1, y0), (x1, y1)), ((x1, y1), (x0, y1)), ((x0, y1), (x0, y0))]
        xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        if self.roof == "gable" and self.pitch > 0:
            segs.append(((xm, y0), (xm, y1)) if self.ridge_axis == "y" else ((x0, ym), (x1, ym)))
        elif self.roof == "hip" and self.pitch > 0:
            a, b = self._hip_ridge()
            segs += [((x0, y0), a), ((x0, y1), a), ((x1, y0), b), ((x1, y1), b), (a, b)]
        return segs

    def _hip_ridge(self) -> tuple[tuple[float, float], tuple[float, float]]:
        x0, y0, x1, y1 = self.footprint
        if x1 - x0 >= y1 - y0:
            h = 0.5 * (y1 - y0)
            ym = 0.5 * (y0 + y1)
            return (x0 + h, ym), (x1 - h, ym)
        h = 0.5 * (x1 - x0)
        xm = 0.5 * (x0 + x1)
        return (xm, y0 + h), (xm, y1 - h)

    def mesh(self, ground: float) -> TriangleMesh:
        """Roof surface plus vertical walls down to ``ground``."""
        x0, y0, x1, y1 = self.footprint
        z = lambda px, py: float(self.roof_height(np.array(px), np.array(py)))  # noqa: E731
        corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
        verts: list[tuple[float, float, float]] = []
        tris: list[tuple[int, int, int]] = []

        def add(*pts):
            base = len(verts)
            verts.extend(pts)
            return list(range(base, base + len(pts)))

        def quad(a, b, c, d):
            i = add(a, b, c, d)
            tris.extend([(i[0], i[1], i[2]), (i[0], i[2], i[3])])

        def tri(a, b, c):
            i = add(a, b, c)
            tris.append((i[0], i[1], i[2]))

        xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        if self.roof in ("flat", "shed") or self.pitch == 0:
            quad(*[(px, py, z(px, py)) for px, py in corners])
        elif self.roof == "gable":
            if self.ridge_axis == "y":
                r = z(xm, y0)
                quad((x0, y0, z(x0, y0)), (xm, y0, r), (xm, y1, r), (x0, y1, z(x0, y1)))
                quad((xm, y0, r), (x1, y0, z(x1, y0)), (x1, y1, z(x1, y1)), (xm, y1, r))
            else:
                r = z(x0, ym)
                quad((x0, y0, z(x0, y0)), (x1, y0, z(x1, y0)), (x1, ym, r), (x0, ym, r))
                quad((x0, ym, r), (x1, ym, r), (x1, y1, z(x1, y1)), (x0, y1, z(x0, y1)))
        else:
            (ax, ay), (bx, by) = self._hip_ridge()
            r = self.eave_height + self.pitch * min(0.5 * (x1 - x0), 0.5 * (y1 - y0))
            e = self.eave_height
            a, b = (ax, ay, r), (bx, by, r)
            if x1 - x0 >= y1 - y0:
                quad((x0, y0, e), (x1, y0, e), b, a)
                quad((x1, y1, e), (x0, y1, e), a, b)
                tri((x0, y1, e), (x0, y0, e), a)
                tri((x1, y0, e), (x1, y1, e), b)
            else:
                quad((x1, y0, e), (x1, y1, e), b, a)
                quad((x0, y1, e), (x0, y0, e), a, b)
                tri((x0, y0, e), (x1, y0, e), a)
                tri((x1, y1, e), (x0, y1, e), b)

        # Walls: vertical, so the rasterizer ignores them; kept for a closed-looking model.
        samples = {
            "y0": [(px, y0) for px in (x0, xm, x1)],
            "x1": [(x1, py) for py in (y0, ym, y1)],
            "y1": [(px, y1) for px in (x1, xm, x0)],
            "x0": [(x0, py) for py in (y1, ym, y0)],
        }
        for pts in samples.values():
            for (pa, pb) in zip(pts[:-1], pts[1:]):
                quad((*pa, ground), (*pb, ground), (*pb, z(*pb)), (*pa, z(*pa)))
        return TriangleMesh(np.array(verts), np.array(tris))


@dataclass(frozen=True)
class SceneSpec:
    grid: GridSpec
    buildings: tuple[Building, ...] = ()
    ground_elevation: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0
    normal_radius: float = DEFAULT_NORMAL_RADIUS
    nodata: float = -9999.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "buildings", tuple(self.buildings))
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        g = self.grid
        for i, b in enumerate(self.buildings):
            x0, y0, x1, y1 = b.footprint
            if x0 < g.x_min or x1 > g.x_max or y0 < g.y_min or y1 > g.y_max:
                raise ValueError(f"building {i} footprint {b.footprint} lies outside the grid bounds")
            if not b.eave_height > self.ground_elevation:
                raise ValueError(f"building {i} eave height {b.eave_height} must exceed ground {self.ground_elevation}")
        for i in range(len(self.buildings)):
            for j in range(i + 1, len(self.buildings)):
                a, b = self.buildings[i].footprint, self.buildings[j].footprint
                if a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]:
                    raise ValueError(f"building footprints {i} and {j} overlap or touch")

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "buildings": [
                {
                    "footprint": list(b.footprint),
                    "roof": b.roof,
                    "eave_height": b.eave_height,
                    "pitch": b.pitch,
                    "ridge_axis": b.ridge_axis,
                }
                for b in self.buildings
            ],
            "ground_elevation": self.ground_elevation,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "normal_radius": self.normal_radius,
            "nodata": self.nodata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SceneSpec:
        try:
            buildings = tuple(
                Building(
                    footprint=tuple(b["footprint"]),
                    roof=b.get("roof", "flat"),
                    eave_height=float(b.get("eave_height", 10.0)),
                    pitch=float(b.get("pitch", 0.0)),
                    ridge_axis=b.get("ridge_axis", "y"),
                )
                for b in d.get("buildings", [])
            )
            return cls(
                grid=GridSpec.from_dict(d["grid"]),
                buildings=buildings,
                ground_elevation=float(d.get("ground_elevation", 0.0)),
                noise_sigma=float(d.get("noise_sigma", 0.0)),
                seed=int(d.get("seed", 0)),
                normal_radius=float(d.get("normal_radius", DEFAULT_NORMAL_RADIUS)),
                nodata=float(d.get("nodata", -9999.0)),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad scene spec: {exc}") from None


def load_scene_spec(path: str | os.PathLike) -> SceneSpec:
    """Read a scene spec from a JSON file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from None
    try:
        return SceneSpec.from_dict(data)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


@dataclass(frozen=True, eq=False)
class Scene:
    spec: SceneSpec
    mask: LabelMask
    dsm: RasterGrid
    mesh: TriangleMesh
    truth_normals: NormalField
    building_id: np.ndarray = field(repr=False)

    def __iter__(self):
        return iter((self.mask, self.dsm, self.mesh, self.truth_normals))


def gaussian_noise(seed: int, n: int) -> np.ndarray:
    """``n`` standard normal deviates from Philox4x64 + Box-Muller (see module docs)."""
    if n == 0:
        return np.zeros(0)
    pairs = (n + 1) // 2
    bitgen = np.random.Philox(seed)
    raw = bitgen.random_raw(2 * pairs).astype(np.uint64)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u1, u2 = u[0::2], u[1::2]
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(2.0 * np.pi * u2)
    out[1::2] = r * np.sin(2.0 * np.pi * u2)
    return out[:n]


def _segment_distance(px: np.ndarray, py: np.ndarray, a, b) -> np.ndarray:
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        return np.hypot(px - ax, py - ay)
    s = np.clip(((px - ax) * dx + (py - ay) * dy) / L2, 0.0, 1.0)
    return np.hypot(px - (ax + s * dx), py - (ay + s * dy))


def generate(spec: SceneSpec) -> Scene:
    """Build mask, DSM, mesh and analytic normals for a scene spec.

    Truth normals are invalid within ``spec.normal_radius`` (inclusive) of any
    footprint edge, ridge or hip line; everywhere else, ground included, they
    are the exact surface normals.
    """
    g = spec.grid
    X, Y = g.center_mesh()
    dsm = np.full(g.shape, spec.ground_elevation, dtype=np.float64)
    building_id = np.full(g.shape, -1, dtype=np.int64)
    normals = np.zeros(g.shape + (3,))
    normals[..., 2] = 1.0
    near_crease = np.zeros(g.shape, dtype=bool)

    for i, b in enumerate(spec.buildings):
        x0, y0, x1, y1 = b.footprint
        inside = (X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1)
        building_id[inside] = i
        dsm[inside] = b.roof_height(X[inside], Y[inside])
        normals[inside] = b.roof_normal(X[inside], Y[inside])
        for a, c in b.creases():
            near_crease |= _segment_distance(X, Y, a, c) <= spec.normal_radius

    if spec.noise_sigma > 0:
        dsm = dsm + spec.noise_sigma * gaussian_noise(spec.seed, dsm.size).reshape(g.shape)

    mask = LabelMask(g, (building_id >= 0).astype(np.float64), spec.nodata)
    ground = TriangleMesh(
        np.array([
            [g.x_min, g.y_min, spec.ground_elevation],
            [g.x_max, g.y_min, spec.ground_elevation],
            [g.x_max, g.y_max, spec.ground_elevation],
            [g.x_min, g.y_max, spec.ground_elevation],
        ]),
        np.array([[0, 1, 2], [0, 2, 3]]),
    )
    mesh = TriangleMesh.concat([ground] + [b.mesh(spec.ground_elevation) for b in spec.buildings])
    truth = NormalField(g, normals, None, ~near_crease)
    return Scene(spec, mask, RasterGrid(g, dsm, spec.nodata), mesh, truth, building_id)


def random_scene_spec(
    seed: int,
    grid: GridSpec | None = None,
    n_buildings: int = 3,
    roofs: tuple[str, ...] = ROOF_KINDS,
    margin_px: int = 10,
    min_size_m: float = 8.0,
    max_size_m: float = 16.0,
    noise_sigma: float = 0.0,
    max_pitch: int = 12,
) -> SceneSpec:
    """A random non-overlapping scene, footprints snapped to cell boundaries.

    Buildings keep ``margin_px`` pixels clear of the grid border and one
    another. Fewer than ``n_buildings`` may be placed if space runs out.
    """
    rng = np.random.default_rng(seed)
    grid = grid or GridSpec(96, 96, 0.0, 48.0, 0.5)
    cs = grid.cell_size
    lo_x = grid.x_min + margin_px * cs
    hi_x = grid.x_max - margin_px * cs
    lo_y = grid.y_min + margin_px * cs
    hi_y = grid.y_max - margin_px * cs
    buildings: list[Building] = []
    for _ in range(50 * n_buildings):
        if len(buildings) == n_buildings:
            break
        w = cs * rng.integers(int(min_size_m / cs), int(max_size_m / cs) + 1)
        h = cs * rng.integers(int(min_size_m / cs), int(max_size_m / cs) + 1)
        if w > hi_x - lo_x or h > hi_y - lo_y:
            continue
        x0 = lo_x + cs * rng.integers(0, int(round((hi_x - lo_x - w) / cs)) + 1)
        y0 = lo_y + cs * rng.integers(0, int(round((hi_y - lo_y - h) / cs)) + 1)
        cand = (x0, y0, x0 + w, y0 + h)
        gap = margin_px * cs
        if any(
            cand[0] - gap < f[2] and f[0] - gap < cand[2] and cand[1] - gap < f[3] and f[1] - gap < cand[3]
            for f in (b.footprint for b in buildings)
        ):
            continue
        roof = str(rng.choice(roofs))
        pitch = 0.0 if roof == "flat" else float(rng.integers(1, max_pitch + 1)) / 12.0
        buildings.append(Building(
            footprint=cand,
            roof=roof,
            eave_height=float(rng.uniform(4.0, 20.0)),
            pitch=pitch,
            ridge_axis=str(rng.choice(["x", "y"])),
        ))
    return SceneSpec(grid=grid, buildings=tuple(buildings), noise_sigma=noise_sigma,
                     seed=int(rng.integers(0, 2**63)))
