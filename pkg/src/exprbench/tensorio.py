"""Deterministic on-disk format for named float64 arrays.

JSON with sorted keys and LF newlines: byte-identical across runs for
identical arrays (Python's float repr round-trips exactly), which the
--deterministic pipeline contract requires. Arrays are stored as
{"shape": [...], "data": [flat values]}.
"""

from __future__ import annotations

import json
import os
from typing import Mapping

import numpy as np

FORMAT_NAME = "exprbench-tensors-v1"


def save_tensors(path, arrays: Mapping[str, np.ndarray], meta: dict | None = None) -> None:
    payload = {"format": FORMAT_NAME, "meta": meta or {}, "tensors": {}}
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        payload["tensors"][name] = {
            "shape": list(arr.shape),
            "data": arr.reshape(-1).tolist(),
        }
    text = json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
    write_atomic(path, text)


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} file: {path}")
    arrays = {}
    for name, spec in payload["tensors"].items():
        arrays[name] = np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
    return arrays, payload.get("meta", {})


def write_atomic(path, text: str) -> None:
    """Write UTF-8 text via a temp file + rename so readers never see partial files."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
