"""Binary checkpoint format.

Layout (little-endian): magic ``b"AMSN"``, u32 version, u32 tensor count,
then per tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
float32 data in row-major order.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"AMSN"
VERSION = 1


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    chunks = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    return b"".join(chunks)


def loads(blob: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    if blob[:4] != MAGIC:
        raise DataError(f"{source}: not an AMSN checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<II", blob, 4)
        if version != VERSION:
            raise DataError(f"{source}: unsupported checkpoint version {version}")
        pos = 12
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            dims = struct.unpack_from(f"<{rank}I", blob, pos)
            pos += 4 * rank
            size = int(np.prod(dims, dtype=np.int64))
            arr = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(dims)
            pos += 4 * size
            out[name] = arr.astype(np.float32)
    except (struct.error, ValueError) as exc:
        raise DataError(f"{source}: truncated or corrupt checkpoint ({exc})") from None
    if pos != len(blob):
        raise DataError(f"{source}: {len(blob) - pos} trailing bytes after last tensor")
    return out


def save(path, tensors: dict[str, np.ndarray]):
    Path(path).write_bytes(dumps(tensors))


def load(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: cannot read checkpoint ({exc.strerror})") from None
    return loads(blob, str(path))
