"""Versioned binary checkpoint format.

Layout::

    b"SCKPT\\x01"                magic + format version
    uint64 little-endian        length of the JSON header in bytes
    JSON header (UTF-8, sorted keys)
    tensor payload              float64 little-endian, row-major, concatenated

The header carries caller metadata (config hash, seed, model kind) and a
``tensors`` list of ``{"name", "shape", "offset"}`` entries where ``offset`` is
in bytes from the start of the payload. Nothing time-dependent is written, so
identical inputs give identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"SCKPT\x01"
FORMAT_VERSION = 1


def write_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, blobs, offset = [], [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
        blobs.append(data)
        offset += len(data)
    header = dict(meta)
    header["format_version"] = FORMAT_VERSION
    header["tensors"] = entries
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)
    return path


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    buf = Path(path).read_bytes()
    if not buf.startswith(MAGIC):
        raise DataError(f"{path}: not a seasoncast checkpoint")
    (n,) = struct.unpack_from("<Q", buf, len(MAGIC))
    start = len(MAGIC) + 8
    header = json.loads(buf[start : start + n].decode("utf-8"))
    payload = memoryview(buf)[start + n :]
    tensors = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=e["offset"])
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(float)
    return header, tensors


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
