"""Cumulative assessment metrics for rasterized urban 3D building models."""

__version__ = "0.1.0"

from cumeval.errors import AlignmentError, CumevalError, InputError, InvariantError, ParseError  # noqa: E402
from cumeval.metrics import (  # noqa: E402
    Counts,
    ErrorMap,
    EvalConfig,
    MetricsReport,
    PixelClass,
    SlopeHistogram,
    classify,
    cumulative_iou,
    iou_c,
    rms_stats,
    slope_histogram,
)
from cumeval.mesh import TriangleMesh, rasterize_mesh, read_obj, write_obj  # noqa: E402
from cumeval.normals import (  # noqa: E402
    NormalField,
    angle_between,
    compute_normals,
    eigen_sym3,
    planarity_gate,
)
from cumeval.pipeline import EvaluationResult, RunConfig, evaluate, evaluate_grids  # noqa: E402
from cumeval.raster import (  # noqa: E402
    GridSpec,
    LabelMask,
    RasterGrid,
    read_mask,
    read_raster,
    resample_check,
    write_raster,
)
from cumeval.registration import Offset, apply_offset, register  # noqa: E402
from cumeval.report import report_parse, report_serialize  # noqa: E402
from cumeval.synth import Building, SceneSpec, generate  # noqa: E402

__all__ = [
    "AlignmentError", "Building", "Counts", "CumevalError", "ErrorMap", "EvalConfig",
    "EvaluationResult", "GridSpec", "InputError", "InvariantError", "LabelMask", "MetricsReport",
    "NormalField", "Offset", "ParseError", "PixelClass", "RasterGrid", "RunConfig", "SceneSpec",
    "SlopeHistogram", "TriangleMesh", "angle_between", "apply_offset", "classify",
    "compute_normals", "cumulative_iou", "eigen_sym3", "evaluate", "evaluate_grids", "generate",
    "iou_c", "planarity_gate", "rasterize_mesh", "read_mask", "read_obj", "read_raster",
    "register", "report_parse", "report_serialize", "resample_check", "rms_stats",
    "slope_histogram", "write_obj", "write_raster",
]
