"""Little-endian binary checkpoint format for named tensors.

Layout:
    magic      8 bytes  b"LPLANCKP"
    version    uint32
    count      uint32
    per tensor:
        name_len uint32, name utf-8 bytes
        rank     uint32, dims uint64 * rank
        values   float64 * prod(dims)

Identical parameter values produce identical bytes; names are written in the
order given (dict insertion order), which the model classes keep stable.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"LPLANCKP"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype="<f8")
            name_b = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.tobytes(order="C"))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    off = 8
    try:
        version, count = struct.unpack_from("<II", data, off)
        off += 8
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        out: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", data, off)
            off += 4
            name = data[off:off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", data, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}Q", data, off)
            off += 8 * rank
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(dims)
            off += 8 * n
            out[name] = arr.copy()
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated checkpoint") from exc
    if off != len(data):
        raise CheckpointError(f"{path}: trailing bytes after payload")
    return out
