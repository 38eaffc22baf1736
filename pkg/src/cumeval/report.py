"""JSON serialization of :class:`~cumeval.metrics.MetricsReport`.

Keys are emitted in a fixed order, absent RMS values are ``null`` and no
wall-clock content is written unless a timestamp is requested, so identical
runs produce identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path

from cumeval import __version__
from cumeval.errors import ParseError
from cumeval.metrics import Counts, EvalConfig, MetricsReport
from cumeval.registration import Offset

TOOL_NAME = "cumeval"
FORMAT_VERSION = 1


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return "sha256:" + h.hexdigest()


def report_to_dict(report: MetricsReport, timestamp: str | None = None) -> dict:
    doc = {
        "tool": TOOL_NAME,
        "version": __version__,
        "format": FORMAT_VERSION,
        "metrics": {
            "iou_c": report.iou_c,
            "iou_z": report.iou_z,
            "iou_m": report.iou_m,
            "rms_z": report.rms_z,
            "rms_theta": report.rms_theta,
        },
        "counts": report.counts.to_dict(),
        "offset": report.offset.to_dict(),
        "config": report.config.to_dict(),
        "inputs": {k: report.inputs[k] for k in sorted(report.inputs)},
    }
    if timestamp is not None:
        doc["timestamp"] = timestamp
    return doc


def report_serialize(report: MetricsReport, include_timestamp: bool = False) -> str:
    """Render a report as UTF-8 JSON text with stable key order."""
    ts = datetime.now(timezone.utc).isoformat(timespec="seconds") if include_timestamp else None
    return json.dumps(report_to_dict(report, ts), indent=2, allow_nan=False) + "\n"


def report_parse(text: str) -> MetricsReport:
    """Inverse of :func:`report_serialize`."""
    try:
        doc = json.loads(text)
        m = doc["metrics"]
        return MetricsReport(
            iou_c=float(m["iou_c"]),
            iou_z=float(m["iou_z"]),
            iou_m=float(m["iou_m"]),
            rms_z=None if m["rms_z"] is None else float(m["rms_z"]),
            rms_theta=None if m["rms_theta"] is None else float(m["rms_theta"]),
            counts=Counts.from_dict(doc["counts"]),
            offset=Offset.from_dict(doc["offset"]),
            config=EvalConfig.from_dict(doc["config"]),
            inputs=dict(doc.get("inputs", {})),
        )
    except json.JSONDecodeError as exc:
        raise ParseError(f"report line {exc.lineno}: {exc.msg}") from None
    except (KeyError, TypeError) as exc:
        raise ParseError(f"report is missing or has a malformed field: {exc}") from None


def read_report(path: str | os.PathLike) -> MetricsReport:
    return report_parse(Path(path).read_text(encoding="utf-8"))
