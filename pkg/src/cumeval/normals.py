"""
Per-pixel surface normals from a DSM by local eigendecomposition.

For every valid pixel the valid samples whose centers lie within a disk of
``radius_m`` are treated as 3D points; the normal is the eigenvector of the
smallest covariance eigenvalue, oriented upward. :func:`planarity_gate`
then discards normals whose neighbourhood is not a clean plane.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from cumeval.eigen import eigen_sym3, jacobi_eigh3
from cumeval.raster import DEFAULT_NODATA, GridSpec, RasterGrid

logger = logging.getLogger(__name__)

DEFAULT_NORMAL_RADIUS = 3.0
DEFAULT_MIN_POINTS = 6

# Planarity constraints on reference neighbourhoods.
MAX_FLATNESS_RATIO = 0.005      # l3 / (l1 + l2 + l3) must be below this
MIN_ANISOTROPY_RATIO = 0.2      # (l2 - l3) / l1 must exceed this

UNIT_TOL = 1e-6
_EIGEN_FLOOR = -1e-12


__all__ = [
    "NormalField",
    "angle_between",
    "angles_deg",
    "compute_normals",
    "disk_offsets",
    "eigen_sym3",
    "planarity_gate",
    "slope_deg",
]


@dataclass(frozen=True, eq=False)
class NormalField:
    """Unit normals per pixel with their eigenvalues and a validity flag.

    Attributes:
        spec: Grid geometry (aligned with the source DSM).
        normals: ``(h, w, 3)`` unit vectors with ``nz >= 0``; NaN where the
            pixel had no usable neighbourhood.
        eigenvalues: ``(h, w, 3)`` descending covariance eigenvalues, or
            ``None`` for analytic fields that have none.
        valid: ``(h, w)`` boolean.
    """

    spec: GridSpec
    normals: np.ndarray
    eigenvalues: np.ndarray | None
    valid: np.ndarray

    def __post_init__(self) -> None:
        h, w = self.spec.shape
        normals = np.array(self.normals, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if normals.shape != (h, w, 3) or valid.shape != (h, w):
            raise ValueError("normal field arrays do not match the grid shape")
        eig = None
        if self.eigenvalues is not None:
            eig = np.array(self.eigenvalues, dtype=np.float64)
            if eig.shape != (h, w, 3):
                raise ValueError("eigenvalue array does not match the grid shape")
            eig.setflags(write=False)
        normals.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "eigenvalues", eig)
        object.__setattr__(self, "valid", valid)

    def with_valid(self, valid: np.ndarray) -> NormalField:
        return NormalField(self.spec, self.normals, self.eigenvalues, valid)

    def slope_degrees(self) -> np.ndarray:
        """Angle of each valid normal from vertical, degrees; NaN where invalid."""
        out = slope_deg(self.normals)
        out[~self.valid] = np.nan
        return out

    def slope_raster(self, nodata: float = DEFAULT_NODATA) -> RasterGrid:
        return RasterGrid.from_masked(self.spec, self.slope_degrees(), nodata)

    def valid_raster(self) -> RasterGrid:
        return RasterGrid(self.spec, self.valid.astype(np.float64))


def disk_offsets(radius_m: float, cell_size: float) -> np.ndarray:
    """Integer ``(drow, dcol)`` offsets whose centers lie within ``radius_m``."""
    reach = radius_m / cell_size
    n = int(math.floor(reach + 1e-9))
    dr, dc = np.mgrid[-n:n + 1, -n:n + 1]
    inside = dr * dr + dc * dc <= reach * reach * (1 + 1e-12)
    return np.column_stack([dr[inside], dc[inside]])


def _window(padded: np.ndarray, pad: int, dr: int, dc: int, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    return padded[pad + dr:pad + dr + h, pad + dc:pad + dc + w]


def compute_normals(
    dsm: RasterGrid,
    radius_m: float = DEFAULT_NORMAL_RADIUS,
    min_points: int = DEFAULT_MIN_POINTS,
) -> NormalField:
    """Estimate a normal at every valid DSM pixel.

    A pixel is invalid when its own sample is invalid or fewer than
    ``min_points`` valid samples fall inside its disk. Covariances use
    population normalization; eigenvalues are clamped at zero.
    """
    if not radius_m > 0:
        raise ValueError(f"radius_m must be > 0, got {radius_m}")
    if min_points < 3:
        raise ValueError(f"min_points must be >= 3, got {min_points}")

    spec = dsm.spec
    shape = spec.shape
    cs = spec.cell_size
    offsets = disk_offsets(radius_m, cs)
    pad = int(np.abs(offsets).max()) if len(offsets) else 0

    valid = dsm.valid_mask()
    z = np.where(valid, dsm.values, 0.0)
    zp = np.pad(z, pad)
    vp = np.pad(valid, pad)

    # Point coordinates are taken relative to the window's center pixel.
    count = np.zeros(shape)
    sx = np.zeros(shape)
    sy = np.zeros(shape)
    sz = np.zeros(shape)
    for dr, dc in offsets:
        v = _window(vp, pad, dr, dc, shape)
        count += v
        sx += v * (dc * cs)
        sy += v * (-dr * cs)
        sz += np.where(v, _window(zp, pad, dr, dc, shape) - z, 0.0)

    enough = valid & (count >= min_points)
    n = np.where(enough, count, 1.0)
    mx, my, mz = sx / n, sy / n, sz / n

    cxx = np.zeros(shape)
    cxy = np.zeros(shape)
    cxz = np.zeros(shape)
    cyy = np.zeros(shape)
    cyz = np.zeros(shape)
    czz = np.zeros(shape)
    for dr, dc in offsets:
        v = _window(vp, pad, dr, dc, shape)
        ex = np.where(v, dc * cs - mx, 0.0)
        ey = np.where(v, -dr * cs - my, 0.0)
        ez = np.where(v, _window(zp, pad, dr, dc, shape) - z - mz, 0.0)
        cxx += ex * ex
        cxy += ex * ey
        cxz += ex * ez
        cyy += ey * ey
        cyz += ey * ez
        czz += ez * ez

    idx = np.nonzero(enough)
    k = len(idx[0])
    normals = np.full(shape + (3,), np.nan)
    eig = np.full(shape + (3,), np.nan)
    if k:
        cov = np.empty((k, 3, 3))
        nk = n[idx]
        cov[:, 0, 0] = cxx[idx] / nk
        cov[:, 0, 1] = cov[:, 1, 0] = cxy[idx] / nk
        cov[:, 0, 2] = cov[:, 2, 0] = cxz[idx] / nk
        cov[:, 1, 1] = cyy[idx] / nk
        cov[:, 1, 2] = cov[:, 2, 1] = cyz[idx] / nk
        cov[:, 2, 2] = czz[idx] / nk
        evals, evecs = jacobi_eigh3(cov)
        evals = np.where(evals < 0.0, 0.0, evals)
        nrm = evecs[:, :, 2]
        nrm = nrm * np.where(nrm[:, 2:3] < 0.0, -1.0, 1.0)
        nrm = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
        normals[idx] = nrm
        eig[idx] = evals
    logger.debug("normals: %d of %d pixels supported (%d offsets)", k, valid.size, len(offsets))
    return NormalField(spec, normals, eig, enough)


def planarity_gate(field: NormalField) -> NormalField:
    """Keep only normals whose neighbourhood is clearly planar.

    A pixel stays valid iff ``l3 / (l1 + l2 + l3) < 0.005`` and
    ``(l2 - l3) / l1 > 0.2``. A zero eigenvalue sum counts as ratio 0; a zero
    ``l1`` fails the second test. Invalid pixels never become valid.
    """
    if field.eigenvalues is None:
        raise ValueError("planarity gate needs eigenvalues; analytic fields carry none")
    l1, l2, l3 = (field.eigenvalues[..., i] for i in range(3))
    with np.errstate(invalid="ignore", divide="ignore"):
        total = l1 + l2 + l3
        flat = np.where(total > 0.0, l3 / np.where(total > 0.0, total, 1.0), 0.0) < MAX_FLATNESS_RATIO
        spread = np.where(l1 > 0.0, (l2 - l3) / np.where(l1 > 0.0, l1, 1.0), -np.inf) > MIN_ANISOTROPY_RATIO
    return field.with_valid(field.valid & flat & spread)


def angles_deg(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Angle between arrays of unit vectors along the last axis, degrees.

    Uses ``atan2(|u x v|, u . v)``, which equals the clamped arccos of the dot
    product but stays accurate for nearly parallel vectors.
    """
    cross = np.cross(u, v)
    dot = np.sum(u * v, axis=-1)
    return np.degrees(np.arctan2(np.linalg.norm(cross, axis=-1), dot))


def angle_between(u, v) -> float:
    """Angle in degrees, within [0, 180], between two unit normals.

    Raises:
        ValueError: either vector's norm differs from 1 by more than 1e-6.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    for name, vec in (("u", u), ("v", v)):
        if vec.shape != (3,) or abs(float(np.linalg.norm(vec)) - 1.0) > UNIT_TOL:
            raise ValueError(f"{name} must be a unit 3-vector, got {vec.tolist()}")
    return float(angles_deg(u, v))


def slope_deg(normals: np.ndarray) -> np.ndarray:
    """Angle of each normal from vertical (``arccos(nz)``), degrees."""
    horiz = np.hypot(normals[..., 0], normals[..., 1])
    return np.degrees(np.arctan2(horiz, normals[..., 2]))
