"""Versioned binary container for model checkpoints.

Layout: 4-byte magic ``XPCK``, u32 version, u32 header length, a UTF-8
JSON header describing the payload (kind, named array shapes, metadata),
then the concatenated little-endian float32 array payloads in header
order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"XPCK"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, kind: str, arrays: dict[str, np.ndarray], meta: dict) -> None:
    header = {
        "kind": kind,
        "meta": meta,
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(blob)))
        fh.write(blob)
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[str, dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(4 * count)
            if len(buf) != 4 * count:
                raise CheckpointError(f"{path}: truncated payload for {spec['name']}")
            arrays[spec["name"]] = np.frombuffer(buf, dtype="<f4").reshape(shape).copy()
    return header["kind"], arrays, header["meta"]
