"""Versioned checkpoint files: named float64 arrays plus a manifest.

Layout: magic ``ACTGENCK``, a 4-byte little-endian version, a 4-byte
length-prefixed UTF-8 JSON header (manifest and array index with shapes
and byte offsets), then the raw little-endian float64 payloads in index
order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ACTGENCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays: dict[str, np.ndarray], manifest: dict) -> None:
    index = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob = arr.tobytes()  # C-ordered little-endian float64 payload
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"manifest": manifest, "index": index}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode())
        payload = fh.read()
    arrays = {}
    for entry in header["index"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return arrays, header["manifest"]


def params_to_arrays(params) -> dict[str, np.ndarray]:
    return {p.name: p.tensor.data.copy() for p in params}


def load_into_params(params, arrays: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into matching parameters; shapes must agree."""
    for p in params:
        if p.name not in arrays:
            raise CheckpointError(f"checkpoint is missing parameter {p.name!r}")
        src = arrays[p.name]
        if src.shape != p.tensor.data.shape:
            raise CheckpointError(
                f"parameter {p.name!r}: checkpoint shape {src.shape} "
                f"vs model shape {p.tensor.data.shape}"
            )
        p.tensor.data[...] = src
