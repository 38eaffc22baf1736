"""
End-to-end evaluation: files in, metrics report and rasters out.

Stage order: rasterize the test mesh (if given) -> register -> apply the
offset -> normals for both models -> planarity-gate the reference normals ->
classify -> cumulative IOU and RMS statistics (-> slope histogram).
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from cumeval.errors import InputError, ParseError, stage
from cumeval.mesh import rasterize_mesh, read_obj
from cumeval.metrics import (
    ErrorMap,
    EvalConfig,
    MetricsReport,
    SlopeHistogram,
    classify,
    cumulative_iou,
    rms_stats,
    slope_histogram,
)
from cumeval.normals import NormalField, compute_normals, planarity_gate
from cumeval.raster import (
    GridSpec,
    LabelMask,
    RasterGrid,
    atomic_write_bytes,
    read_mask,
    read_raster,
    require_aligned,
    write_raster,
)
from cumeval.registration import apply_offset, register
from cumeval.report import file_digest, report_serialize

logger = logging.getLogger(__name__)

REPORT_NAME = "report.json"
ERROR_MAP_NAME = "error_map.cevg"
REF_SLOPE_NAME = "ref_slope.cevg"
TEST_SLOPE_NAME = "test_slope.cevg"
HIST_NAME = "slope_hist.json"


@dataclass
class EvaluationResult:
    report: MetricsReport
    error_map: ErrorMap
    ref_normals: NormalField      # gated
    test_normals: NormalField
    test_mask: LabelMask          # registered
    test_dsm: RasterGrid          # registered
    histogram: SlopeHistogram | None = None


def evaluate_grids(
    ref_mask: LabelMask,
    ref_dsm: RasterGrid,
    test_mask: LabelMask,
    test_dsm: RasterGrid,
    config: EvalConfig = EvalConfig(),
    hist_bin_width: float | None = None,
    inputs: dict | None = None,
) -> EvaluationResult:
    """Run the full evaluation on in-memory grids."""
    with stage("align"):
        require_aligned(ref_mask=ref_mask, ref_dsm=ref_dsm, test_mask=test_mask, test_dsm=test_dsm)

    with stage("register"):
        offset = register(test_mask, test_dsm, ref_mask, ref_dsm, config.reg_radius)
        reg_mask, reg_dsm = apply_offset(test_mask, test_dsm, offset)

    with stage("normals"):
        ref_normals = planarity_gate(compute_normals(ref_dsm, config.normal_radius, config.min_points))
        test_normals = compute_normals(reg_dsm, config.normal_radius, config.min_points)

    with stage("classify"):
        emap = classify(reg_mask, ref_mask, reg_dsm, ref_dsm, ref_normals, test_normals, config)

    with stage("metrics"):
        ious = cumulative_iou(emap)
        rms_z, rms_theta = rms_stats(emap, reg_dsm, ref_dsm, ref_normals, test_normals)
        report = MetricsReport(
            iou_c=ious[0],
            iou_z=ious[1],
            iou_m=ious[2],
            rms_z=rms_z,
            rms_theta=rms_theta,
            counts=emap.counts(),
            offset=offset,
            config=config,
            inputs=dict(inputs or {}),
        )
        report.check()
        hist = None
        if hist_bin_width is not None:
            roofs = ref_normals.with_valid(ref_normals.valid & ref_mask.positive())
            hist = slope_histogram(roofs, hist_bin_width)

    logger.info(
        "iou_c=%.4f iou_z=%.4f iou_m=%.4f offset=(%d, %d, %.3f)",
        report.iou_c, report.iou_z, report.iou_m, offset.dx_pixels, offset.dy_pixels, offset.dz_meters,
    )
    return EvaluationResult(report, emap, ref_normals, test_normals, reg_mask, reg_dsm, hist)


@dataclass
class RunConfig:
    """File-level description of one evaluation run.

    Exactly one of ``test_dsm`` and ``test_mesh`` must be given. A mesh is
    rasterized onto ``grid_spec`` (a JSON grid-spec file) or, by default,
    onto the reference DSM's grid.
    """

    ref_mask: Path
    ref_dsm: Path
    test_mask: Path
    test_dsm: Path | None = None
    test_mesh: Path | None = None
    grid_spec: Path | None = None
    out_dir: Path | None = None
    eval: EvalConfig = field(default_factory=EvalConfig)
    emit_error_map: bool = False
    emit_slope: bool = False
    emit_hist: bool = False
    hist_bin_width: float = 1.0
    include_timestamp: bool = False

    def validate(self) -> None:
        if (self.test_dsm is None) == (self.test_mesh is None):
            raise InputError("exactly one of test_dsm and test_mesh is required")
        for name in ("ref_mask", "ref_dsm", "test_mask", "test_dsm", "test_mesh", "grid_spec"):
            p = getattr(self, name)
            if p is not None and not Path(p).is_file():
                raise InputError(f"{name}: file not found: {p}")
        if self.out_dir is not None:
            out = Path(self.out_dir)
            if out.exists() and not out.is_dir():
                raise InputError(f"out_dir {out} is not a directory")
        if (self.emit_error_map or self.emit_slope or self.emit_hist) and self.out_dir is None:
            raise InputError("raster/histogram outputs were requested without an output directory")


def load_grid_spec(path: str | os.PathLike) -> GridSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if isinstance(data, dict) and "grid" in data:
        data = data["grid"]
    try:
        return GridSpec.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise ParseError(f"{path}: {exc}") from None


def evaluate(cfg: RunConfig) -> MetricsReport:
    """Evaluate a test model given as files; write the report and requested outputs."""
    with stage("config"):
        cfg.validate()

    with stage("read"):
        ref_mask = read_mask(cfg.ref_mask)
        ref_dsm = read_raster(cfg.ref_dsm)
        test_mask = read_mask(cfg.test_mask)
        inputs = {
            "ref_mask": file_digest(cfg.ref_mask),
            "ref_dsm": file_digest(cfg.ref_dsm),
            "test_mask": file_digest(cfg.test_mask),
        }

    if cfg.test_mesh is not None:
        with stage("rasterize"):
            mesh = read_obj(cfg.test_mesh)
            spec = load_grid_spec(cfg.grid_spec) if cfg.grid_spec else ref_dsm.spec
            test_dsm = rasterize_mesh(mesh, spec, ref_dsm.nodata)
            inputs["test_mesh"] = file_digest(cfg.test_mesh)
    else:
        with stage("read"):
            test_dsm = read_raster(cfg.test_dsm)
            inputs["test_dsm"] = file_digest(cfg.test_dsm)

    result = evaluate_grids(
        ref_mask, ref_dsm, test_mask, test_dsm, cfg.eval,
        hist_bin_width=cfg.hist_bin_width if cfg.emit_hist else None,
        inputs=inputs,
    )

    if cfg.out_dir is not None:
        with stage("write"):
            write_outputs(result, cfg)
    return result.report


def write_outputs(result: EvaluationResult, cfg: RunConfig) -> None:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = report_serialize(result.report, include_timestamp=cfg.include_timestamp)
    atomic_write_bytes(out / REPORT_NAME, text.encode("utf-8"))
    if cfg.emit_error_map:
        write_raster(result.error_map.to_raster(), out / ERROR_MAP_NAME)
    if cfg.emit_slope:
        write_raster(result.ref_normals.slope_raster(), out / REF_SLOPE_NAME)
        write_raster(result.test_normals.slope_raster(), out / TEST_SLOPE_NAME)
    if cfg.emit_hist and result.histogram is not None:
        payload = json.dumps(result.histogram.to_dict(), indent=2) + "\n"
        atomic_write_bytes(out / HIST_NAME, payload.encode("utf-8"))
