"""Flat binary checkpoint container.

Layout (documented byte-exactly in docs/checkpoint_format.md):

* bytes 0..3: magic ``SNC1``
* bytes 4..7: little-endian uint32 length of the JSON header
* header: UTF-8 JSON object with keys ``format_version``, ``meta`` (free-form)
  and ``tensors`` (ordered list of ``{"name": str, "shape": [int, ...]}``)
* payload: for each tensor, in header order, its values as little-endian
  32-bit floats in C order, with no padding between tensors.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

__all__ = ["write_container", "read_container"]

MAGIC = b"SNC1"
FORMAT_VERSION = 1


def write_container(path: str | Path, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write named float tensors with a JSON header; order follows the dict."""
    entries = [{"name": name, "shape": list(arr.shape)} for name, arr in tensors.items()]
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "meta": meta, "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for arr in tensors.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a container; returns (meta, tensors as float32 arrays)."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint container (bad magic at offset 0)")
    (header_len,) = struct.unpack("<I", blob[4:8])
    if len(blob) < 8 + header_len:
        raise DataError(f"{path}: truncated header (need {header_len} bytes at offset 8)")
    try:
        header = json.loads(blob[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt JSON header: {exc}") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {header.get('format_version')}")
    tensors: dict[str, np.ndarray] = {}
    offset = 8 + header_len
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * 4
        if offset + nbytes > len(blob):
            raise DataError(
                f"{path}: truncated payload for tensor {entry['name']!r} at offset {offset}"
            )
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        tensors[entry["name"]] = arr.reshape(entry["shape"]).copy()
        offset += nbytes
    if offset != len(blob):
        raise DataError(f"{path}: {len(blob) - offset} unexpected trailing bytes at offset {offset}")
    return header["meta"], tensors
