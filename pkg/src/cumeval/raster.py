"""
Georeferenced raster grids and their file formats.

Conventions used throughout the package:

- Arrays are row-major with shape ``(height, width)``.
- Row 0 is the north (maximum-Y) edge; ``origin_x, origin_y`` is the outer
  (upper-left) corner of pixel ``(0, 0)``.
- A sample is valid iff it is finite and its bit pattern differs from the
  nodata sentinel.

Two on-disk formats are supported: ESRI-style ASCII grids and the ``CEVG``
little-endian binary grid (see :func:`write_raster`).
"""

from __future__ import annotations

import logging
import math
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from cumeval.errors import AlignmentError, ParseError

logger = logging.getLogger(__name__)

DEFAULT_NODATA = -9999.0
ALIGN_RTOL = 1e-9

RasterFormat = Literal["ascii-grid", "binary-grid"]

CEVG_MAGIC = b"CEVG"
CEVG_VERSION = 1
# magic, version, width, height, origin_x, origin_y, cell_size, nodata
_CEVG_HEADER = struct.Struct("<4sIQQdddd")


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a raster: size, upper-left corner and square cell size."""

    width: int
    height: int
    origin_x: float
    origin_y: float
    cell_size: float

    def __post_init__(self) -> None:
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValueError("grid width/height must be integers")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")
        if not (math.isfinite(self.cell_size) and self.cell_size > 0):
            raise ValueError(f"cell_size must be finite and > 0, got {self.cell_size}")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "origin_x", float(self.origin_x))
        object.__setattr__(self, "origin_y", float(self.origin_y))
        object.__setattr__(self, "cell_size", float(self.cell_size))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def x_min(self) -> float:
        return self.origin_x

    @property
    def x_max(self) -> float:
        return self.origin_x + self.width * self.cell_size

    @property
    def y_max(self) -> float:
        return self.origin_y

    @property
    def y_min(self) -> float:
        return self.origin_y - self.height * self.cell_size

    def pixel_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(xs, ys)``: world X of each column center, world Y of each row center."""
        cols = np.arange(self.width, dtype=np.float64)
        rows = np.arange(self.height, dtype=np.float64)
        xs = self.origin_x + (cols + 0.5) * self.cell_size
        ys = self.origin_y - (rows + 0.5) * self.cell_size
        return xs, ys

    def center_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return full ``(height, width)`` arrays of pixel-center X and Y."""
        xs, ys = self.pixel_centers()
        return np.meshgrid(xs, ys)

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "origin_x": self.origin_x,
            "origin_y": self.origin_y,
            "cell_size": self.cell_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GridSpec:
        try:
            return cls(
                width=d["width"],
                height=d["height"],
                origin_x=d["origin_x"],
                origin_y=d["origin_y"],
                cell_size=d["cell_size"],
            )
        except KeyError as exc:
            raise ParseError(f"grid spec is missing field {exc.args[0]!r}") from None


def resample_check(a: GridSpec, b: GridSpec) -> bool:
    """True iff two grid specs are aligned.

    Sizes must match exactly. Cell sizes must agree to a relative tolerance of
    1e-9; origins to the same tolerance, with an absolute floor of 1e-9 cell
    sizes so that origins at or near zero compare sensibly.
    """
    if a.width != b.width or a.height != b.height:
        return False
    if not math.isclose(a.cell_size, b.cell_size, rel_tol=ALIGN_RTOL, abs_tol=0.0):
        return False
    floor = ALIGN_RTOL * max(a.cell_size, b.cell_size)
    return math.isclose(a.origin_x, b.origin_x, rel_tol=ALIGN_RTOL, abs_tol=floor) and math.isclose(
        a.origin_y, b.origin_y, rel_tol=ALIGN_RTOL, abs_tol=floor
    )


aligned = resample_check


def require_aligned(**grids: GridSpec | RasterGrid) -> None:
    """Raise :class:`AlignmentError` unless every named grid shares one spec."""
    items = [(name, g.spec if isinstance(g, RasterGrid) else g) for name, g in grids.items()]
    if not items:
        return
    first_name, first = items[0]
    for name, spec in items[1:]:
        if not resample_check(first, spec):
            raise AlignmentError(f"{name} grid {spec} is not aligned with {first_name} grid {first}")


def _nodata_bits(values: np.ndarray, nodata: float) -> np.ndarray:
    sentinel = np.array(nodata, dtype=np.float64).view(np.uint64)
    return values.view(np.uint64) == sentinel


@dataclass(frozen=True, eq=False)
class RasterGrid:
    """A georeferenced 2D grid of float64 samples with a nodata sentinel.

    Instances are immutable: the values array is marked read-only.
    """

    spec: GridSpec
    values: np.ndarray
    nodata: float = DEFAULT_NODATA

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, order="C", copy=True)
        if values.ndim == 1 and values.size == self.spec.width * self.spec.height:
            values = values.reshape(self.spec.shape)
        if values.shape != self.spec.shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid {self.spec.height}x{self.spec.width}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "nodata", float(self.nodata))

    @property
    def width(self) -> int:
        return self.spec.width

    @property
    def height(self) -> int:
        return self.spec.height

    @property
    def cell_size(self) -> float:
        return self.spec.cell_size

    def valid_mask(self) -> np.ndarray:
        """Boolean array: finite and not bit-identical to the nodata sentinel."""
        return np.isfinite(self.values) & ~_nodata_bits(self.values, self.nodata)

    def masked(self) -> np.ndarray:
        """Copy of the values with invalid samples replaced by NaN."""
        out = self.values.copy()
        out[~self.valid_mask()] = np.nan
        return out

    def with_values(self, values: np.ndarray) -> RasterGrid:
        """New grid on the same spec; NaNs in ``values`` become nodata."""
        values = np.array(values, dtype=np.float64)
        values[np.isnan(values)] = self.nodata
        return type(self)(self.spec, values, self.nodata)

    @classmethod
    def full(cls, spec: GridSpec, fill: float, nodata: float = DEFAULT_NODATA) -> RasterGrid:
        return cls(spec, np.full(spec.shape, fill, dtype=np.float64), nodata)

    @classmethod
    def from_masked(cls, spec: GridSpec, values: np.ndarray, nodata: float = DEFAULT_NODATA) -> RasterGrid:
        """Build a grid from an array where NaN marks invalid samples."""
        values = np.array(values, dtype=np.float64)
        values[np.isnan(values)] = nodata
        return cls(spec, values, nodata)

    def equals(self, other: RasterGrid) -> bool:
        """Bit-exact comparison of header, sentinel and samples."""
        return (
            self.spec == other.spec
            and np.array(self.nodata).view(np.uint64) == np.array(other.nodata).view(np.uint64)
            and np.array_equal(self.values.view(np.uint64), other.values.view(np.uint64))
        )


class LabelMask(RasterGrid):
    """Binary building / not-building raster. Valid samples are exactly 0 or 1."""

    def __post_init__(self) -> None:
        super().__post_init__()
        valid = self.valid_mask()
        bad = valid & (self.values != 0.0) & (self.values != 1.0)
        if bad.any():
            r, c = np.argwhere(bad)[0]
            raise ValueError(f"label mask sample at row {r}, col {c} is {self.values[r, c]!r}, expected 0 or 1")

    @classmethod
    def from_bool(cls, spec: GridSpec, positive: np.ndarray, valid: np.ndarray | None = None,
                  nodata: float = DEFAULT_NODATA) -> LabelMask:
        values = np.asarray(positive, dtype=bool).astype(np.float64)
        if valid is not None:
            values[~np.asarray(valid, dtype=bool)] = nodata
        return cls(spec, values, nodata)

    @classmethod
    def from_grid(cls, grid: RasterGrid) -> LabelMask:
        return cls(grid.spec, grid.values, grid.nodata)

    def positive(self) -> np.ndarray:
        """Pixels labelled 1 (nodata counts as not positive)."""
        return self.valid_mask() & (self.values == 1.0)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

_SUFFIX_FORMATS: dict[str, RasterFormat] = {
    ".asc": "ascii-grid",
    ".grd": "ascii-grid",
    ".txt": "ascii-grid",
    ".cevg": "binary-grid",
    ".bin": "binary-grid",
}


def infer_format(path: str | os.PathLike) -> RasterFormat:
    """Guess the raster format from a file suffix."""
    suffix = Path(path).suffix.lower()
    try:
        return _SUFFIX_FORMATS[suffix]
    except KeyError:
        raise ParseError(f"{path}: cannot infer raster format from suffix {suffix!r}") from None


def read_raster(path: str | os.PathLike, format: RasterFormat | None = None) -> RasterGrid:
    """Read a raster file.

    Args:
        path: File to read.
        format: ``"ascii-grid"`` or ``"binary-grid"``; inferred from the suffix
            when omitted.

    Raises:
        ParseError: malformed header, sample count mismatch or non-square cells.
            The message names the file and the offending line or byte offset.
        FileNotFoundError: the file does not exist.
    """
    fmt = format or infer_format(path)
    if fmt == "ascii-grid":
        return _read_ascii(Path(path))
    if fmt == "binary-grid":
        return _read_binary(Path(path))
    raise ValueError(f"unknown raster format {fmt!r}")


def read_mask(path: str | os.PathLike, format: RasterFormat | None = None) -> LabelMask:
    grid = read_raster(path, format)
    try:
        return LabelMask.from_grid(grid)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_raster(grid: RasterGrid, path: str | os.PathLike, format: RasterFormat | None = None) -> None:
    """Write a raster atomically (temp file in the target directory, then rename).

    The binary ``CEVG`` layout is::

        offset  type      field
        0       4 bytes   magic "CEVG"
        4       u32       version (1)
        8       u64       width
        16      u64       height
        24      f64       origin_x   (upper-left corner)
        32      f64       origin_y   (upper-left corner)
        40      f64       cell_size
        48      f64       nodata
        56      f64[w*h]  samples, row-major, row 0 = north

    All fields little-endian. ASCII output uses shortest round-trip float
    formatting, so both formats are lossless.
    """
    fmt = format or infer_format(path)
    if fmt == "ascii-grid":
        payload = _ascii_bytes(grid)
    elif fmt == "binary-grid":
        payload = _binary_bytes(grid)
    else:
        raise ValueError(f"unknown raster format {fmt!r}")
    atomic_write_bytes(Path(path), payload)


def atomic_write_bytes(path: Path, payload: bytes) -> None:
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def _ascii_bytes(grid: RasterGrid) -> bytes:
    spec = grid.spec
    lines = [
        f"ncols {spec.width}",
        f"nrows {spec.height}",
        f"xllcorner {spec.x_min!r}",
        f"yllcorner {spec.y_min!r}",
        f"cellsize {spec.cell_size!r}",
        f"NODATA_value {grid.nodata!r}",
    ]
    for row in grid.values.tolist():
        lines.append(" ".join(repr(v) for v in row))
    return ("\n".join(lines) + "\n").encode("ascii")


_ASCII_KEYS = {
    "ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter",
    "cellsize", "dx", "dy", "nodata_value", "nodata",
}


def _read_ascii(path: Path) -> RasterGrid:
    text = path.read_text(encoding="ascii", errors="strict")
    lines = text.splitlines()
    header: dict[str, tuple[str, int]] = {}
    lineno = 0
    while lineno < len(lines):
        stripped = lines[lineno].strip()
        if not stripped:
            lineno += 1
            continue
        parts = stripped.split()
        key = parts[0].lower()
        if key not in _ASCII_KEYS:
            break
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno + 1}: malformed header line {stripped!r}")
        if key in header:
            raise ParseError(f"{path}:{lineno + 1}: duplicate header key {parts[0]!r}")
        header[key] = (parts[1], lineno + 1)
        lineno += 1

    def field(name: str, kind=float):
        raw, ln = header[name]
        try:
            value = kind(raw)
        except ValueError:
            raise ParseError(f"{path}:{ln}: bad value {raw!r} for {name}") from None
        return value

    for required in ("ncols", "nrows"):
        if required not in header:
            raise ParseError(f"{path}: malformed header, missing {required}")
    ncols, nrows = field("ncols", int), field("nrows", int)
    if ncols < 1 or nrows < 1:
        raise ParseError(f"{path}:{header['ncols'][1]}: malformed header, grid size {ncols}x{nrows}")

    if "cellsize" in header:
        cell = field("cellsize")
    elif "dx" in header and "dy" in header:
        dx, dy = field("dx"), field("dy")
        if dx != dy:
            raise ParseError(f"{path}:{header['dy'][1]}: non-square cells (dx={dx!r}, dy={dy!r})")
        cell = dx
    else:
        raise ParseError(f"{path}: malformed header, missing cellsize")
    if not (math.isfinite(cell) and cell > 0):
        raise ParseError(f"{path}:{header.get('cellsize', header.get('dx'))[1]}: cellsize must be > 0")

    if "xllcorner" in header:
        x_ll = field("xllcorner")
    elif "xllcenter" in header:
        x_ll = field("xllcenter") - 0.5 * cell
    else:
        raise ParseError(f"{path}: malformed header, missing xllcorner")
    if "yllcorner" in header:
        y_ll = field("yllcorner")
    elif "yllcenter" in header:
        y_ll = field("yllcenter") - 0.5 * cell
    else:
        raise ParseError(f"{path}: malformed header, missing yllcorner")

    if "nodata_value" in header:
        nodata = field("nodata_value")
    elif "nodata" in header:
        nodata = field("nodata")
    else:
        nodata = DEFAULT_NODATA

    samples: list[float] = []
    for ln in range(lineno, len(lines)):
        for token in lines[ln].split():
            try:
                samples.append(float(token))
            except ValueError:
                raise ParseError(f"{path}:{ln + 1}: bad sample {token!r}") from None
    expected = ncols * nrows
    if len(samples) != expected:
        raise ParseError(
            f"{path}:{len(lines)}: sample count mismatch, header declares {expected} "
            f"({ncols}x{nrows}) but file holds {len(samples)}"
        )
    spec = GridSpec(ncols, nrows, x_ll, y_ll + nrows * cell, cell)
    return RasterGrid(spec, np.array(samples, dtype=np.float64).reshape(nrows, ncols), nodata)


def _binary_bytes(grid: RasterGrid) -> bytes:
    s = grid.spec
    header = _CEVG_HEADER.pack(
        CEVG_MAGIC, CEVG_VERSION, s.width, s.height, s.origin_x, s.origin_y, s.cell_size, grid.nodata
    )
    return header + grid.values.astype("<f8", copy=False).tobytes(order="C")


def _read_binary(path: Path) -> RasterGrid:
    data = path.read_bytes()
    if len(data) < _CEVG_HEADER.size:
        raise ParseError(f"{path}: offset {len(data)}: truncated header ({_CEVG_HEADER.size} bytes expected)")
    magic, version, width, height, ox, oy, cell, nodata = _CEVG_HEADER.unpack_from(data, 0)
    if magic != CEVG_MAGIC:
        raise ParseError(f"{path}: offset 0: bad magic {magic!r}, expected {CEVG_MAGIC!r}")
    if version != CEVG_VERSION:
        raise ParseError(f"{path}: offset 4: unsupported version {version}")
    if width < 1 or height < 1:
        raise ParseError(f"{path}: offset 8: malformed header, grid size {width}x{height}")
    if not (math.isfinite(cell) and cell > 0):
        raise ParseError(f"{path}: offset 40: cell_size must be > 0, got {cell!r}")
    body = len(data) - _CEVG_HEADER.size
    if body != 8 * width * height:
        raise ParseError(
            f"{path}: offset {_CEVG_HEADER.size}: sample count mismatch, header declares "
            f"{width * height} samples but body holds {body / 8:g}"
        )
    values = np.frombuffer(data, dtype="<f8", offset=_CEVG_HEADER.size).reshape(height, width)
    return RasterGrid(GridSpec(width, height, ox, oy, cell), values.astype(np.float64), nodata)
