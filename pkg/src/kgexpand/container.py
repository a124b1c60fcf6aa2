"""Self-describing checkpoint container with reproducible bytes.

Layout: one JSON header line (sorted keys), then the raw little-endian
float32 bytes of every tensor, concatenated in header order. No archive
wrapper, so identical contents always produce identical files.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

FORMAT_TAG = "kgx-checkpoint-v1"


class ContainerError(ValueError):
    """Raised for unreadable or mismatched checkpoint files."""


@dataclass
class Checkpoint:
    kind: str  # "triplet" or "ffnn"
    meta: dict
    tensors: dict[str, np.ndarray]


def save_checkpoint(
    path: str, kind: str, meta: dict, tensors: list[tuple[str, np.ndarray]]
) -> None:
    """Write header + tensor bytes atomically.

    ``meta`` must be JSON-serializable; tensors are stored as float32.
    """
    specs = []
    blobs = []
    for name, arr in tensors:
        a = np.ascontiguousarray(arr, dtype="<f4")
        specs.append({"name": name, "shape": list(a.shape)})
        blobs.append(a.tobytes())
    header = {
        "format": FORMAT_TAG,
        "kind": kind,
        "meta": meta,
        "tensors": specs,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":"))
    data = head.encode("utf-8") + b"\n" + b"".join(blobs)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    newline = data.find(b"\n")
    if newline < 0:
        raise ContainerError("missing header line")
    try:
        header = json.loads(data[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ContainerError(f"unreadable header: {exc}") from exc
    if header.get("format") != FORMAT_TAG:
        raise ContainerError(f"unknown format tag {header.get('format')!r}")
    tensors: dict[str, np.ndarray] = {}
    offset = newline + 1
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        chunk = data[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise ContainerError(f"tensor {spec['name']!r} truncated")
        tensors[spec["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
        offset += nbytes
    if offset != len(data):
        raise ContainerError(f"{len(data) - offset} trailing bytes")
    return Checkpoint(kind=header["kind"], meta=header["meta"], tensors=tensors)
