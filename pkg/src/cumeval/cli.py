"""
Command-line interface.

Subcommands::

    cumeval eval       full evaluation, writes report.json (+ rasters)
    cumeval rasterize  OBJ mesh -> DSM raster
    cumeval normals    DSM -> slope-angle and validity rasters
    cumeval synth      scene spec (JSON) -> mask, DSM, mesh, truth slope
    cumeval hist       DSM -> slope histogram (JSON, optional PNG)

Exit codes: 0 success, 2 input/parse error, 3 alignment error,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from cumeval import __version__
from cumeval.errors import AlignmentError, CumevalError, InputError, InvariantError, ParseError, stage
from cumeval.mesh import rasterize_mesh, read_obj, write_obj
from cumeval.metrics import EvalConfig, plot_slope_histogram, slope_histogram
from cumeval.normals import DEFAULT_MIN_POINTS, DEFAULT_NORMAL_RADIUS, compute_normals, planarity_gate
from cumeval.pipeline import RunConfig, evaluate, load_grid_spec
from cumeval.raster import atomic_write_bytes, read_mask, read_raster, require_aligned, write_raster
from cumeval.report import report_serialize
from cumeval.synth import generate, load_scene_spec

logger = logging.getLogger("cumeval")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ALIGNMENT = 3
EXIT_INTERNAL = 4

# eval options that may also come from --config; value is the type to coerce config entries to.
_EVAL_KEYS = {
    "ref_mask": Path,
    "ref_dsm": Path,
    "test_mask": Path,
    "test_dsm": Path,
    "test_mesh": Path,
    "grid_spec": Path,
    "out_dir": Path,
    "z_threshold": float,
    "angle_threshold": float,
    "normal_radius": float,
    "min_points": int,
    "reg_radius": int,
    "emit_error_map": bool,
    "emit_slope": bool,
    "emit_hist": bool,
    "hist_bin_width": float,
    "timestamp": bool,
}
_EVAL_DEFAULTS = {
    "z_threshold": 1.0,
    "angle_threshold": 5.0,
    "normal_radius": DEFAULT_NORMAL_RADIUS,
    "min_points": DEFAULT_MIN_POINTS,
    "reg_radius": 10,
    "emit_error_map": False,
    "emit_slope": False,
    "emit_hist": False,
    "hist_bin_width": 1.0,
    "timestamp": False,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cumeval", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    # Defaults are None so that config-file values can be told apart from omitted flags.
    p = sub.add_parser("eval", help="evaluate a test model against a reference")
    p.add_argument("--config", type=Path, help="JSON file with option values (flags override it)")
    p.add_argument("--ref-mask", type=Path)
    p.add_argument("--ref-dsm", type=Path)
    p.add_argument("--test-mask", type=Path)
    p.add_argument("--test-dsm", type=Path)
    p.add_argument("--test-mesh", type=Path)
    p.add_argument("--grid-spec", type=Path, help="JSON grid spec for mesh rasterization")
    p.add_argument("--z-threshold", type=float, help="meters (default 1.0)")
    p.add_argument("--angle-threshold", type=float, help="degrees (default 5.0)")
    p.add_argument("--normal-radius", type=float, help="meters (default 3.0)")
    p.add_argument("--min-points", type=int, help="minimum samples per normal (default 6)")
    p.add_argument("--reg-radius", type=int, help="registration search radius, pixels (default 10)")
    p.add_argument("--out-dir", type=Path)
    p.add_argument("--emit-error-map", action="store_const", const=True)
    p.add_argument("--emit-slope", action="store_const", const=True)
    p.add_argument("--emit-hist", action="store_const", const=True)
    p.add_argument("--hist-bin-width", type=float, help="degrees (default 1.0)")
    p.add_argument("--timestamp", action="store_const", const=True, help="add a timestamp to the report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rasterize", help="rasterize an OBJ mesh to a DSM")
    p.add_argument("--mesh", type=Path, required=True)
    grid = p.add_mutually_exclusive_group(required=True)
    grid.add_argument("--grid-spec", type=Path)
    grid.add_argument("--like", type=Path, help="take the grid from this raster")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("normals", help="write slope-angle and validity rasters for a DSM")
    p.add_argument("--dsm", type=Path, required=True)
    p.add_argument("--normal-radius", type=float, default=DEFAULT_NORMAL_RADIUS)
    p.add_argument("--min-points", type=int, default=DEFAULT_MIN_POINTS)
    p.add_argument("--no-gate", action="store_true", help="skip the planarity gate")
    p.add_argument("--out-slope", type=Path, required=True)
    p.add_argument("--out-valid", type=Path)
    p.set_defaults(func=cmd_normals)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--scene", type=Path, required=True, help="JSON scene spec")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--format", choices=("binary-grid", "ascii-grid"), default="binary-grid")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("hist", help="slope histogram of a DSM's gated normals")
    p.add_argument("--dsm", type=Path, required=True)
    p.add_argument("--mask", type=Path, help="restrict to pixels labelled 1")
    p.add_argument("--normal-radius", type=float, default=DEFAULT_NORMAL_RADIUS)
    p.add_argument("--min-points", type=int, default=DEFAULT_MIN_POINTS)
    p.add_argument("--bin-width", type=float, default=1.0)
    p.add_argument("--out", type=Path, required=True, help="histogram JSON")
    p.add_argument("--plot", type=Path, help="also render a PNG (needs matplotlib)")
    p.set_defaults(func=cmd_hist)
    return parser


def _load_config_file(path: Path) -> dict:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    out = {}
    for key, value in data.items():
        norm = key.replace("-", "_")
        if norm not in _EVAL_KEYS:
            raise ParseError(f"{path}: unknown config key {key!r}")
        kind = _EVAL_KEYS[norm]
        if kind is Path and value is not None:
            # Relative paths in a config file are taken relative to the file.
            value = (path.parent / value) if not Path(value).is_absolute() else Path(value)
        elif kind is bool and not isinstance(value, bool):
            raise ParseError(f"{path}: {key} must be true or false")
        elif value is not None:
            try:
                value = kind(value)
            except (TypeError, ValueError):
                raise ParseError(f"{path}: bad value {value!r} for {key}") from None
        out[norm] = value
    return out


def resolve_eval_options(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < command-line flags."""
    merged = dict(_EVAL_DEFAULTS)
    if args.config is not None:
        merged.update(_load_config_file(args.config))
    for key in _EVAL_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def run_config_from_options(opts: dict) -> RunConfig:
    for required in ("ref_mask", "ref_dsm", "test_mask"):
        if opts.get(required) is None:
            raise InputError(f"--{required.replace('_', '-')} is required")
    eval_cfg = EvalConfig(
        z_threshold=opts["z_threshold"],
        angle_threshold=opts["angle_threshold"],
        normal_radius=opts["normal_radius"],
        min_points=opts["min_points"],
        reg_radius=opts["reg_radius"],
    )
    return RunConfig(
        ref_mask=opts["ref_mask"],
        ref_dsm=opts["ref_dsm"],
        test_mask=opts["test_mask"],
        test_dsm=opts.get("test_dsm"),
        test_mesh=opts.get("test_mesh"),
        grid_spec=opts.get("grid_spec"),
        out_dir=opts.get("out_dir"),
        eval=eval_cfg,
        emit_error_map=opts["emit_error_map"],
        emit_slope=opts["emit_slope"],
        emit_hist=opts["emit_hist"],
        hist_bin_width=opts["hist_bin_width"],
        include_timestamp=opts["timestamp"],
    )


def cmd_eval(args: argparse.Namespace) -> int:
    with stage("config"):
        cfg = run_config_from_options(resolve_eval_options(args))
    report = evaluate(cfg)
    sys.stdout.write(report_serialize(report, include_timestamp=cfg.include_timestamp))
    return EXIT_OK


def cmd_rasterize(args: argparse.Namespace) -> int:
    with stage("read"):
        mesh = read_obj(args.mesh)
        if args.grid_spec is not None:
            spec, nodata = load_grid_spec(args.grid_spec), -9999.0
        else:
            like = read_raster(args.like)
            spec, nodata = like.spec, like.nodata
    with stage("rasterize"):
        dsm = rasterize_mesh(mesh, spec, nodata)
    with stage("write"):
        write_raster(dsm, args.out)
    return EXIT_OK


def cmd_normals(args: argparse.Namespace) -> int:
    with stage("read"):
        dsm = read_raster(args.dsm)
    with stage("normals"):
        field = compute_normals(dsm, args.normal_radius, args.min_points)
        if not args.no_gate:
            field = planarity_gate(field)
    with stage("write"):
        write_raster(field.slope_raster(), args.out_slope)
        if args.out_valid is not None:
            write_raster(field.valid_raster(), args.out_valid)
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    with stage("read"):
        spec = load_scene_spec(args.scene)
    with stage("synth"):
        scene = generate(spec)
    ext = ".cevg" if args.format == "binary-grid" else ".asc"
    out = args.out_dir
    with stage("write"):
        out.mkdir(parents=True, exist_ok=True)
        write_raster(scene.mask, out / f"mask{ext}", args.format)
        write_raster(scene.dsm, out / f"dsm{ext}", args.format)
        write_raster(scene.truth_normals.slope_raster(), out / f"truth_slope{ext}", args.format)
        write_obj(scene.mesh, out / "mesh.obj")
        grid = json.dumps({"grid": spec.grid.to_dict()}, indent=2) + "\n"
        atomic_write_bytes(out / "grid.json", grid.encode("utf-8"))
    return EXIT_OK


def cmd_hist(args: argparse.Namespace) -> int:
    with stage("read"):
        dsm = read_raster(args.dsm)
        mask = read_mask(args.mask) if args.mask is not None else None
    with stage("normals"):
        field = planarity_gate(compute_normals(dsm, args.normal_radius, args.min_points))
        if mask is not None:
            require_aligned(dsm=dsm, mask=mask)
            field = field.with_valid(field.valid & mask.positive())
    with stage("hist"):
        hist = slope_histogram(field, args.bin_width)
    with stage("write"):
        atomic_write_bytes(args.out, (json.dumps(hist.to_dict(), indent=2) + "\n").encode("utf-8"))
        if args.plot is not None:
            plot_slope_histogram(hist, args.plot)
    return EXIT_OK


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, AlignmentError):
        return EXIT_ALIGNMENT
    if isinstance(exc, InvariantError):
        return EXIT_INTERNAL
    if isinstance(exc, InputError):
        return EXIT_INPUT
    return EXIT_INTERNAL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CumevalError as exc:
        where = f" [stage={exc.stage}]" if exc.stage else ""
        print(f"cumeval: error{where}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except Exception as exc:  # noqa: BLE001
        logger.debug("unhandled exception", exc_info=True)
        print(f"cumeval: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
