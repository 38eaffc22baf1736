"""
Cumulative IOU metrics, RMS statistics, error maps and slope histograms.

Each true-positive building pixel is tested first for elevation error and
then for surface-slope error. ``iou_c`` counts all true positives,
``iou_z`` only those passing the elevation test, and ``iou_m`` only those
passing both, all over the same ``TP + FP + FN`` denominator.

Where a test cannot be evaluated because reference or test heights are
missing, or because the reference normal was rejected as unstable, the
pixel is assumed to pass. A valid reference normal paired with an invalid
test normal fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from cumeval.errors import InvariantError
from cumeval.normals import (
    DEFAULT_MIN_POINTS,
    DEFAULT_NORMAL_RADIUS,
    NormalField,
    angles_deg,
)
from cumeval.raster import GridSpec, LabelMask, RasterGrid, require_aligned
from cumeval.registration import DEFAULT_SEARCH_RADIUS, Offset

DEFAULT_Z_THRESHOLD = 1.0        # meters
DEFAULT_ANGLE_THRESHOLD = 5.0    # degrees
ERROR_MAP_NODATA = 255.0


class PixelClass(IntEnum):
    TN = 0
    FP = 1
    FN = 2
    TP_PASS = 3
    TP_FAIL_Z = 4
    TP_FAIL_SLOPE = 5
    EXCLUDED = 6


@dataclass(frozen=True)
class EvalConfig:
    """Thresholds and estimator parameters for one evaluation."""

    z_threshold: float = DEFAULT_Z_THRESHOLD
    angle_threshold: float = DEFAULT_ANGLE_THRESHOLD
    normal_radius: float = DEFAULT_NORMAL_RADIUS
    min_points: int = DEFAULT_MIN_POINTS
    reg_radius: int = DEFAULT_SEARCH_RADIUS

    def __post_init__(self) -> None:
        if not self.z_threshold > 0:
            raise ValueError(f"z_threshold must be > 0, got {self.z_threshold}")
        if not 0 < self.angle_threshold < 90:
            raise ValueError(f"angle_threshold must be in (0, 90), got {self.angle_threshold}")
        if not self.normal_radius > 0:
            raise ValueError(f"normal_radius must be > 0, got {self.normal_radius}")
        if self.min_points < 3:
            raise ValueError(f"min_points must be >= 3, got {self.min_points}")
        if self.reg_radius < 0:
            raise ValueError(f"reg_radius must be >= 0, got {self.reg_radius}")

    def to_dict(self) -> dict:
        return {
            "z_threshold": self.z_threshold,
            "angle_threshold": self.angle_threshold,
            "normal_radius": self.normal_radius,
            "min_points": self.min_points,
            "reg_radius": self.reg_radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EvalConfig:
        return cls(
            z_threshold=float(d["z_threshold"]),
            angle_threshold=float(d["angle_threshold"]),
            normal_radius=float(d["normal_radius"]),
            min_points=int(d["min_points"]),
            reg_radius=int(d["reg_radius"]),
        )


@dataclass(frozen=True)
class Counts:
    tp_c: int = 0
    fp_c: int = 0
    fn_c: int = 0
    tp_z_pass: int = 0
    tp_theta_pass: int = 0
    z_unevaluable: int = 0
    theta_unevaluable: int = 0

    @property
    def denominator(self) -> int:
        return self.tp_c + self.fp_c + self.fn_c

    def to_dict(self) -> dict:
        return {
            "tp_c": self.tp_c,
            "fp_c": self.fp_c,
            "fn_c": self.fn_c,
            "tp_z_pass": self.tp_z_pass,
            "tp_theta_pass": self.tp_theta_pass,
            "z_unevaluable": self.z_unevaluable,
            "theta_unevaluable": self.theta_unevaluable,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Counts:
        return cls(**{k: int(d[k]) for k in cls().to_dict()})


@dataclass(frozen=True, eq=False)
class ErrorMap:
    """Per-pixel evaluation outcome plus the flags behind it.

    Attributes:
        spec: Grid geometry.
        classes: ``(h, w)`` uint8 array of :class:`PixelClass` codes.
        z_pass: TP pixels passing (or assumed to pass) the elevation test.
        theta_pass: TP pixels passing (or assumed to pass) the slope test.
        z_unevaluable: TP pixels lacking a valid reference or test height.
        theta_unevaluable: TP pixels whose reference normal is invalid.
    """

    spec: GridSpec
    classes: np.ndarray
    z_pass: np.ndarray
    theta_pass: np.ndarray
    z_unevaluable: np.ndarray
    theta_unevaluable: np.ndarray

    def count(self, cls: PixelClass) -> int:
        return int(np.count_nonzero(self.classes == cls))

    def counts(self) -> Counts:
        tp = np.isin(self.classes, (PixelClass.TP_PASS, PixelClass.TP_FAIL_Z, PixelClass.TP_FAIL_SLOPE))
        return Counts(
            tp_c=int(tp.sum()),
            fp_c=self.count(PixelClass.FP),
            fn_c=self.count(PixelClass.FN),
            tp_z_pass=int((tp & self.z_pass).sum()),
            tp_theta_pass=int((tp & self.theta_pass).sum()),
            z_unevaluable=int((tp & self.z_unevaluable).sum()),
            theta_unevaluable=int((tp & self.theta_unevaluable).sum()),
        )

    def true_positive(self) -> np.ndarray:
        return np.isin(self.classes, (PixelClass.TP_PASS, PixelClass.TP_FAIL_Z, PixelClass.TP_FAIL_SLOPE))

    def to_raster(self) -> RasterGrid:
        """Class codes 0-6 as a raster (255 is the unused nodata sentinel)."""
        return RasterGrid(self.spec, self.classes.astype(np.float64), ERROR_MAP_NODATA)


@dataclass(frozen=True)
class MetricsReport:
    """Everything one evaluation produces, minus the per-pixel rasters.

    ``rms_z`` / ``rms_theta`` are ``None`` when no pixel was evaluable.
    ``inputs`` maps input names to content digests; it is carried into the
    serialized report but ignored when comparing reports.
    """

    iou_c: float
    iou_z: float
    iou_m: float
    rms_z: float | None
    rms_theta: float | None
    counts: Counts
    offset: Offset
    config: EvalConfig
    inputs: dict = field(default_factory=dict, compare=False)

    def check(self) -> None:
        """Raise :class:`InvariantError` if the report is internally inconsistent."""
        for name in ("iou_c", "iou_z", "iou_m"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvariantError(f"{name}={value} outside [0, 1]")
        if not self.iou_m <= self.iou_z <= self.iou_c:
            raise InvariantError(
                f"cumulative progression violated: iou_m={self.iou_m} iou_z={self.iou_z} iou_c={self.iou_c}"
            )
        for name in ("rms_z", "rms_theta"):
            value = getattr(self, name)
            if value is not None and not value >= 0.0:
                raise InvariantError(f"{name}={value} is negative or NaN")


def _ratio(num: int, den: int) -> float:
    return 1.0 if den == 0 else num / den


def iou_c(test_mask: LabelMask, ref_mask: LabelMask) -> tuple[float, Counts]:
    """Semantic IOU of the test labels against the reference.

    Reference-nodata pixels are excluded; test-nodata pixels count as
    not-building. An empty denominator gives IOU 1 with zero counts.
    """
    require_aligned(test_mask=test_mask, ref_mask=ref_mask)
    ref_valid = ref_mask.valid_mask()
    ref_pos = ref_mask.positive()
    test_pos = test_mask.positive() & ref_valid
    tp = int(np.count_nonzero(test_pos & ref_pos))
    fp = int(np.count_nonzero(test_pos & ~ref_pos))
    fn = int(np.count_nonzero(~test_pos & ref_pos))
    counts = Counts(tp_c=tp, fp_c=fp, fn_c=fn)
    return _ratio(tp, counts.denominator), counts


def classify(
    test_mask: LabelMask,
    ref_mask: LabelMask,
    test_dsm: RasterGrid,
    ref_dsm: RasterGrid,
    ref_normals: NormalField,
    test_normals: NormalField,
    cfg: EvalConfig = EvalConfig(),
) -> ErrorMap:
    """Classify every pixel of registered inputs.

    ``ref_normals`` is expected to be gated already. Thresholds are strict:
    a pixel passes the elevation test iff ``|dz| < z_threshold`` and the slope
    test iff the normal angle is ``< angle_threshold``.
    """
    require_aligned(
        ref_mask=ref_mask, test_mask=test_mask, ref_dsm=ref_dsm, test_dsm=test_dsm,
        ref_normals=ref_normals.spec, test_normals=test_normals.spec,
    )
    ref_valid = ref_mask.valid_mask()
    ref_pos = ref_mask.positive()
    test_pos = test_mask.positive()

    classes = np.full(ref_mask.spec.shape, PixelClass.TN, dtype=np.uint8)
    classes[test_pos & ~ref_pos] = PixelClass.FP
    classes[~test_pos & ref_pos] = PixelClass.FN
    tp = test_pos & ref_pos

    both_z = ref_dsm.valid_mask() & test_dsm.valid_mask()
    with np.errstate(invalid="ignore"):
        dz = np.abs(test_dsm.values - ref_dsm.values)
    z_unevaluable = ~both_z
    z_pass = z_unevaluable | (both_z & (dz < cfg.z_threshold))

    ref_nv = ref_normals.valid
    test_nv = test_normals.valid
    both_n = ref_nv & test_nv
    angle = np.full(ref_nv.shape, np.nan)
    if both_n.any():
        angle[both_n] = angles_deg(ref_normals.normals[both_n], test_normals.normals[both_n])
    theta_unevaluable = ~ref_nv
    with np.errstate(invalid="ignore"):
        theta_pass = theta_unevaluable | (both_n & (angle < cfg.angle_threshold))

    classes[tp & z_pass & theta_pass] = PixelClass.TP_PASS
    classes[tp & ~z_pass] = PixelClass.TP_FAIL_Z
    classes[tp & z_pass & ~theta_pass] = PixelClass.TP_FAIL_SLOPE
    classes[~ref_valid] = PixelClass.EXCLUDED

    return ErrorMap(
        spec=ref_mask.spec,
        classes=classes,
        z_pass=z_pass,
        theta_pass=theta_pass,
        z_unevaluable=z_unevaluable,
        theta_unevaluable=theta_unevaluable,
    )


def cumulative_iou(emap: ErrorMap) -> tuple[float, float, float]:
    """``(iou_c, iou_z, iou_m)`` from an error map; ``(1, 1, 1)`` if nothing is labelled."""
    n_pass = emap.count(PixelClass.TP_PASS)
    n_fail_z = emap.count(PixelClass.TP_FAIL_Z)
    n_fail_slope = emap.count(PixelClass.TP_FAIL_SLOPE)
    den = n_pass + n_fail_z + n_fail_slope + emap.count(PixelClass.FP) + emap.count(PixelClass.FN)
    tp_c = n_pass + n_fail_z + n_fail_slope
    return _ratio(tp_c, den), _ratio(n_pass + n_fail_slope, den), _ratio(n_pass, den)


def _rms(values: np.ndarray) -> float | None:
    if values.size == 0:
        return None
    return math.sqrt(float(np.mean(values * values)))


def rms_stats(
    emap: ErrorMap,
    test_dsm: RasterGrid,
    ref_dsm: RasterGrid,
    ref_normals: NormalField,
    test_normals: NormalField,
) -> tuple[float | None, float | None]:
    """RMS height error (m) and RMS normal angle (deg) over true-positive pixels.

    Heights count where both DSMs are valid; angles where both normals are
    valid (the reference field being the gated one). Empty sets give ``None``.
    """
    tp = emap.true_positive()
    zsel = tp & ref_dsm.valid_mask() & test_dsm.valid_mask()
    rms_z = _rms(test_dsm.values[zsel] - ref_dsm.values[zsel])
    nsel = tp & ref_normals.valid & test_normals.valid
    rms_theta = _rms(angles_deg(ref_normals.normals[nsel], test_normals.normals[nsel]))
    return rms_z, rms_theta


@dataclass(frozen=True)
class SlopeHistogram:
    """Counts of slope angles (degrees from flat) in fixed-width bins.

    ``edges`` has one more entry than ``counts``. ``markers`` are the slope
    angles of standard roof pitches 1/12 .. 12/12.
    """

    edges: np.ndarray
    counts: np.ndarray
    markers: np.ndarray

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def to_dict(self) -> dict:
        return {
            "bin_width": self.bin_width,
            "edges": self.edges.tolist(),
            "counts": self.counts.tolist(),
            "pitch_markers": self.markers.tolist(),
        }

    def peak(self) -> float:
        """Center of the fullest bin."""
        i = int(np.argmax(self.counts))
        return float(0.5 * (self.edges[i] + self.edges[i + 1]))


def pitch_markers() -> np.ndarray:
    return np.degrees(np.arctan(np.arange(1, 13) / 12.0))


def slope_histogram(normals: NormalField, bin_width: float = 1.0) -> SlopeHistogram:
    """Histogram of slope angles over valid pixels, bins starting at 0 degrees."""
    if not bin_width > 0:
        raise ValueError(f"bin_width must be > 0, got {bin_width}")
    slopes = normals.slope_degrees()[normals.valid]
    nbins = max(1, int(math.ceil(90.0 / bin_width - 1e-9)))
    edges = np.arange(nbins + 1, dtype=np.float64) * bin_width
    idx = np.minimum(np.floor(slopes / bin_width).astype(np.int64), nbins - 1)
    counts = np.bincount(idx, minlength=nbins).astype(np.int64)
    return SlopeHistogram(edges, counts, pitch_markers())


def plot_slope_histogram(hist: SlopeHistogram, path, title: str | None = None) -> None:
    """Render the histogram on a log count axis with pitch marker lines."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    centers = 0.5 * (hist.edges[:-1] + hist.edges[1:])
    ax.bar(centers, hist.counts, width=hist.bin_width, color="0.3")
    for m in hist.markers:
        ax.axvline(m, color="tab:red", lw=0.6, alpha=0.7)
    if hist.counts.any():
        ax.set_yscale("log")
    ax.set_xlabel("roof slope (degrees from flat)")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
