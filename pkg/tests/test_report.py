import json

import pytest

from cumeval import __version__
from cumeval.errors import ParseError
from cumeval.metrics import Counts, EvalConfig, MetricsReport
from cumeval.registration import Offset
from cumeval.report import file_digest, read_report, report_parse, report_serialize


def sample(rms_theta=1.25):
    return MetricsReport(
        iou_c=0.9, iou_z=0.75, iou_m=0.5, rms_z=0.123456789012345, rms_theta=rms_theta,
        counts=Counts(tp_c=90, fp_c=5, fn_c=5, tp_z_pass=75, tp_theta_pass=60, z_unevaluable=1, theta_unevaluable=2),
        offset=Offset(-2, 1, -0.4),
        config=EvalConfig(z_threshold=0.5, angle_threshold=3.0),
        inputs={"ref_mask": "sha256:ab", "ref_dsm": "sha256:cd"},
    )


def test_round_trip():
    r = sample()
    back = report_parse(report_serialize(r))
    assert back == r
    assert back.inputs == r.inputs


def test_byte_deterministic():
    assert report_serialize(sample()) == report_serialize(sample())


def test_key_order_and_header():
    doc = json.loads(report_serialize(sample()))
    assert list(doc) == ["tool", "version", "format", "metrics", "counts", "offset", "config", "inputs"]
    assert doc["tool"] == "cumeval" and doc["version"] == __version__
    assert list(doc["metrics"]) == ["iou_c", "iou_z", "iou_m", "rms_z", "rms_theta"]


def test_absent_rms_is_null():
    text = report_serialize(sample(rms_theta=None))
    assert json.loads(text)["metrics"]["rms_theta"] is None
    assert '"rms_theta": null' in text
    assert report_parse(text).rms_theta is None


def test_timestamp_only_on_request():
    assert "timestamp" not in json.loads(report_serialize(sample()))
    doc = json.loads(report_serialize(sample(), include_timestamp=True))
    assert doc["timestamp"].endswith("+00:00")
    assert report_parse(json.dumps(doc)) == sample()


@pytest.mark.parametrize("text", ["{", "{}", '{"metrics": {"iou_c": 1}}'])
def test_parse_errors(text):
    with pytest.raises(ParseError):
        report_parse(text)


def test_file_digest_and_read(tmp_path):
    p = tmp_path / "r.json"
    p.write_text(report_serialize(sample()))
    assert read_report(p) == sample()
    (tmp_path / "x").write_bytes(b"abc")
    assert file_digest(tmp_path / "x") == "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
