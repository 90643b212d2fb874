# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Utils for canonical JSON, JSONL and report files
import hashlib
import json
import math
import os
from typing import Any, Dict, Iterable, List

REPORT_DECIMALS = 6


def canonical_dumps(data: Any) -> str:
    """Serialize to canonical JSON: sorted keys, compact separators"""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def round_floats(data: Any, decimals: int = REPORT_DECIMALS) -> Any:
    """Recursively round floats for report output"""
    if isinstance(data, float):
        if not math.isfinite(data):
            return data
        # normalise -0.0
        return round(data, decimals) + 0.0
    if isinstance(data, dict):
        return {k: round_floats(v, decimals) for k, v in data.items()}
    if isinstance(data, (list, tuple)):
        return [round_floats(v, decimals) for v in data]
    return data


def digest_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def digest_file(path: str) -> str:
    with open(path, "rb") as f:
        return digest_bytes(f.read())


def report_dumps(data: Any) -> str:
    """Report text: floats rounded, indented, key-sorted, newline-terminated"""
    return json.dumps(round_floats(data), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_text(text: str, output_path: str) -> str:
    directory = os.path.dirname(output_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as f:
        f.write(text)
    return output_path


def write_json(data: Any, output_path: str) -> str:
    """Write a report as indented, key-sorted JSON"""
    return write_text(report_dumps(data), output_path)


def to_jsonl(data: Iterable[Dict[str, Any]], output_path: str) -> str:
    """Convert records to JSONL format and save to a file"""
    directory = os.path.dirname(output_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(output_path, "w", encoding="utf-8") as f:
        for item in data:
            f.write(canonical_dumps(round_floats(item)) + "\n")
    return output_path


def read_jsonl(input_path: str) -> List[Dict[str, Any]]:
    """Read a JSONL file, skipping blank lines"""
    records = []
    with open(input_path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def read_name_list(input_path: str) -> List[str]:
    """Read one name per line, ignoring blanks and '#' comments"""
    names = []
    with open(input_path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                names.append(line)
    return names
