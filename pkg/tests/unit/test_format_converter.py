"""Unit tests for canonical JSON and report writers."""

import json
import os

import pytest

from structreward.utils.format_converter import (
    canonical_dumps,
    digest_bytes,
    digest_file,
    read_jsonl,
    read_name_list,
    report_dumps,
    round_floats,
    to_jsonl,
    write_json,
)


@pytest.mark.unit
def test_canonical_dumps_is_key_sorted_and_compact():
    assert canonical_dumps({"b": 1, "a": [1, 2], "c": "é"}) == '{"a":[1,2],"b":1,"c":"é"}'


@pytest.mark.unit
def test_round_floats():
    data = {"x": 0.1234567891, "y": [1.0000004, -0.0000001], "z": "text", "n": 3}
    assert round_floats(data) == {"x": 0.123457, "y": [1.0, 0.0], "z": "text", "n": 3}
    assert str(round_floats(-0.0000001)) == "0.0"
    assert round_floats(float("inf")) == float("inf")


@pytest.mark.unit
def test_report_dumps():
    text = report_dumps({"b": 0.5, "a": 1 / 3})
    assert text.endswith("\n")
    assert json.loads(text) == {"a": 0.333333, "b": 0.5}
    assert text.index('"a"') < text.index('"b"')


@pytest.mark.unit
def test_digests(tmp_path):
    path = tmp_path / "data.bin"
    path.write_bytes(b"abc")
    expected = "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    assert digest_bytes(b"abc") == expected
    assert digest_file(str(path)) == expected


@pytest.mark.unit
def test_to_jsonl_and_read_back(tmp_path):
    records = [{"step": 0, "mean_R": 0.25}, {"step": 1, "mean_R": None}]
    output_path = str(tmp_path / "nested" / "history.jsonl")
    assert to_jsonl(records, output_path) == output_path
    with open(output_path) as f:
        lines = f.readlines()
    assert lines == ['{"mean_R":0.25,"step":0}\n', '{"mean_R":null,"step":1}\n']
    assert read_jsonl(output_path) == records


@pytest.mark.unit
def test_write_json_creates_directories(tmp_path):
    path = write_json({"R": 0.5}, str(tmp_path / "out" / "report.json"))
    assert os.path.exists(path)
    with open(path) as f:
        assert json.load(f) == {"R": 0.5}


@pytest.mark.unit
def test_read_name_list(tmp_path):
    path = tmp_path / "names.txt"
    path.write_text("# training images\nimg_1.jpg\n\n  img_2.jpg  \n")
    assert read_name_list(str(path)) == ["img_1.jpg", "img_2.jpg"]
