"""Bit-exact named-tensor serialization.

Binary layout (all integers little-endian u32 unless noted):

    magic b"LDLE" | version | tensor count
    per tensor, sorted by name:
        name length | name UTF-8 | rank | extents... | CRC32(payload) | payload f32 LE
    metadata length | metadata JSON UTF-8 | CRC32(metadata)

Unknown versions are rejected outright. Every payload carries its own CRC32
so single-byte corruption is detected on load. Writes go through a temp file
plus rename, so a crashed save never leaves a half-written checkpoint.
"""

from __future__ import annotations

import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointError

CHECKPOINT_MAGIC = b"LDLE"
CHECKPOINT_VERSION = 1

_U32 = struct.Struct("<I")


def save_checkpoint(weights: dict[str, Tensor], path, meta: dict | None = None) -> None:
    path = Path(path)
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += _U32.pack(CHECKPOINT_VERSION)
    blob += _U32.pack(len(weights))
    for name in sorted(weights):
        payload = np.ascontiguousarray(weights[name].data, dtype="<f4").tobytes()
        encoded = name.encode("utf-8")
        blob += _U32.pack(len(encoded))
        blob += encoded
        shape = weights[name].shape
        blob += _U32.pack(len(shape))
        for extent in shape:
            blob += _U32.pack(extent)
        blob += _U32.pack(zlib.crc32(payload))
        blob += payload
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    blob += _U32.pack(len(meta_bytes))
    blob += meta_bytes
    blob += _U32.pack(zlib.crc32(meta_bytes))

    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def _read(path) -> tuple[dict[str, Tensor], dict]:
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version} (this build reads {CHECKPOINT_VERSION})"
        )
    count = r.u32()
    weights: dict[str, Tensor] = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        if name in weights:
            raise CheckpointError(f"{path}: duplicate tensor name '{name}'")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        crc = r.u32()
        n_bytes = 4 * int(np.prod(shape, dtype=np.int64)) if rank else 4
        payload = r.take(n_bytes)
        if zlib.crc32(payload) != crc:
            raise CheckpointError(f"{path}: checksum mismatch in tensor '{name}' (corrupt payload)")
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
        weights[name] = Tensor(arr, requires_grad=True)
    meta_bytes = r.take(r.u32())
    if zlib.crc32(meta_bytes) != r.u32():
        raise CheckpointError(f"{path}: checksum mismatch in metadata")
    meta = json.loads(meta_bytes.decode("utf-8"))
    return weights, meta


def load_checkpoint(path) -> dict[str, Tensor]:
    return _read(path)[0]


def read_checkpoint_meta(path) -> dict:
    return _read(path)[1]


def validate_shapes(weights: dict[str, Tensor], expected: dict[str, tuple[int, ...]], what: str) -> None:
    """Check a loaded weight map against a network's expected name/shape table."""
    missing = sorted(set(expected) - set(weights))
    if missing:
        raise CheckpointError(f"{what}: missing tensors {missing[:3]}{'...' if len(missing) > 3 else ''}")
    for name, shape in expected.items():
        if tuple(weights[name].shape) != tuple(shape):
            raise CheckpointError(
                f"{what}: tensor '{name}' has shape {tuple(weights[name].shape)}, expected {tuple(shape)}"
            )
