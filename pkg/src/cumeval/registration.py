"""
Translation registration of a test model onto the reference.

Shifts are integer pixels: ``dx`` moves content toward increasing column
index (east), ``dy`` toward increasing row index (south). The XY shift
maximizes the semantic IOU between the shifted test mask and the reference
mask; the vertical offset is the median height residual over the resulting
true-positive pixels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from cumeval.raster import LabelMask, RasterGrid, require_aligned

logger = logging.getLogger(__name__)

DEFAULT_SEARCH_RADIUS = 10


@dataclass(frozen=True)
class Offset:
    """Translation to add to the test model: whole pixels in XY, meters in Z."""

    dx_pixels: int = 0
    dy_pixels: int = 0
    dz_meters: float = 0.0

    def to_dict(self) -> dict:
        return {"dx_pixels": self.dx_pixels, "dy_pixels": self.dy_pixels, "dz_meters": self.dz_meters}

    @classmethod
    def from_dict(cls, d: dict) -> Offset:
        return cls(int(d["dx_pixels"]), int(d["dy_pixels"]), float(d["dz_meters"]))


def shift_array(values: np.ndarray, dx: int, dy: int, fill: float) -> np.ndarray:
    """Translate a 2D array by ``(dx, dy)`` pixels, filling vacated cells."""
    h, w = values.shape
    out = np.full_like(values, fill)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src_r = slice(max(-dy, 0), h - max(dy, 0))
    dst_r = slice(max(dy, 0), h - max(-dy, 0))
    src_c = slice(max(-dx, 0), w - max(dx, 0))
    dst_c = slice(max(dx, 0), w - max(-dx, 0))
    out[dst_r, dst_c] = values[src_r, src_c]
    return out


def apply_offset(mask: LabelMask, dsm: RasterGrid, offset: Offset) -> tuple[LabelMask, RasterGrid]:
    """Translate a mask/DSM pair by ``offset``.

    Vacated pixels become nodata in both grids; valid DSM samples are raised
    by ``offset.dz_meters``.
    """
    require_aligned(mask=mask, dsm=dsm)
    dx, dy = offset.dx_pixels, offset.dy_pixels
    new_mask = LabelMask(mask.spec, shift_array(mask.values, dx, dy, mask.nodata), mask.nodata)
    moved = shift_array(dsm.values, dx, dy, dsm.nodata)
    if offset.dz_meters != 0.0:
        valid = RasterGrid(dsm.spec, moved, dsm.nodata).valid_mask()
        moved[valid] += offset.dz_meters
    return new_mask, RasterGrid(dsm.spec, moved, dsm.nodata)


def _iou_counts(test_pos: np.ndarray, ref_pos: np.ndarray, ref_valid: np.ndarray, dx: int, dy: int):
    """TP and TP+FP+FN for ``test_pos`` shifted by (dx, dy); vacated pixels count as negative."""
    shifted = shift_array(test_pos, dx, dy, False)
    shifted &= ref_valid
    tp = int(np.count_nonzero(shifted & ref_pos))
    union = int(np.count_nonzero(shifted | ref_pos))
    return tp, union


def _better(cand: tuple[int, int, int, int], best: tuple[int, int, int, int]) -> bool:
    """Compare (tp, union, dx, dy) candidates under IOU-then-tie-break order."""
    tp_a, un_a, dx_a, dy_a = cand
    tp_b, un_b, dx_b, dy_b = best
    # Empty union means IOU 1 by convention; compare fractions exactly by cross-multiplying.
    num_a, den_a = (1, 1) if un_a == 0 else (tp_a, un_a)
    num_b, den_b = (1, 1) if un_b == 0 else (tp_b, un_b)
    lhs, rhs = num_a * den_b, num_b * den_a
    if lhs != rhs:
        return lhs > rhs
    key_a = (dx_a * dx_a + dy_a * dy_a, dy_a, dx_a)
    key_b = (dx_b * dx_b + dy_b * dy_b, dy_b, dx_b)
    return key_a < key_b


def register(
    test_mask: LabelMask,
    test_dsm: RasterGrid,
    ref_mask: LabelMask,
    ref_dsm: RasterGrid,
    radius: int = DEFAULT_SEARCH_RADIUS,
) -> Offset:
    """Find the translation that best aligns the test model with the reference.

    Every integer shift in ``[-radius, radius]^2`` is scored by the IOU of the
    shifted test mask against the reference mask (reference-nodata pixels are
    excluded, test-nodata counts as not-building). Ties go to the smallest
    ``dx^2 + dy^2``, then smallest ``dy``, then smallest ``dx``. The vertical
    offset is ``median(ref - shifted test)`` over true-positive pixels valid in
    both DSMs, or 0 when there are none.
    """
    if radius < 0:
        raise ValueError(f"search radius must be >= 0, got {radius}")
    require_aligned(ref_mask=ref_mask, ref_dsm=ref_dsm, test_mask=test_mask, test_dsm=test_dsm)

    ref_valid = ref_mask.valid_mask()
    ref_pos = ref_mask.positive()
    test_pos = test_mask.positive()

    best = None
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            tp, union = _iou_counts(test_pos, ref_pos, ref_valid, dx, dy)
            cand = (tp, union, dx, dy)
            if best is None or _better(cand, best):
                best = cand
    _, _, dx, dy = best

    shifted_mask, shifted_dsm = apply_offset(test_mask, test_dsm, Offset(dx, dy, 0.0))
    tp = shifted_mask.positive() & ref_pos & ref_valid
    both = tp & ref_dsm.valid_mask() & shifted_dsm.valid_mask()
    dz = float(np.median(ref_dsm.values[both] - shifted_dsm.values[both])) if both.any() else 0.0
    logger.debug("registration offset dx=%d dy=%d dz=%.6f", dx, dy, dz)
    return Offset(dx, dy, dz)
