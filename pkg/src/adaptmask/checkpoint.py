"""Binary checkpoint container.

Layout: the header line ``ADAPTMASK-CKPT-1\\n``, a little-endian uint64 giving
the length of a UTF-8 JSON metadata block, the metadata, then every array as
raw little-endian float32 in the order listed under ``metadata["arrays"]``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

HEADER = b"ADAPTMASK-CKPT-1\n"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, arrays: Dict[str, np.ndarray], meta: dict) -> Path:
    index = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        index.append({"name": name, "shape": list(np.shape(arr)), "offset": offset,
                      "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    meta = dict(meta, arrays=index)
    blob = json.dumps(meta).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(HEADER)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for raw in chunks:
            fh.write(raw)
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Tuple[Dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(HEADER):
        raise CheckpointError(f"{path}: not an ADAPTMASK-CKPT-1 checkpoint")
    pos = len(HEADER)
    (n,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    meta = json.loads(data[pos:pos + n].decode("utf-8"))
    pos += n
    arrays = {}
    for entry in meta["arrays"]:
        start = pos + entry["offset"]
        buf = data[start:start + entry["nbytes"]]
        arrays[entry["name"]] = np.frombuffer(buf, dtype="<f4").astype(np.float32).reshape(entry["shape"])
    return arrays, meta
