"""Versioned binary checkpoint container.

Layout (little endian)::

    magic      8 bytes  b"FASTQCKP"
    version    u32
    cfg hash   32 bytes (sha256 digest)
    n_tensors  u32
    tensors    n x (u16 name length, utf-8 name, u8 ndim, ndim x u64 dims, float64 data)
    meta       u64 length + utf-8 JSON (sorted keys)
    crc32      u32 over every preceding byte
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"FASTQCKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config_hash: str
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    digest = bytes.fromhex(ckpt.config_hash)
    if len(digest) != 32:
        raise CheckpointError("config hash must be a sha256 hex digest")
    parts = [MAGIC, struct.pack("<I", VERSION), digest, struct.pack("<I", len(ckpt.tensors))]
    for name in sorted(ckpt.tensors):
        arr = np.ascontiguousarray(ckpt.tensors[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    meta = json.dumps(ckpt.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts.append(struct.pack("<Q", len(meta)) + meta)
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def from_bytes(blob: bytes) -> Checkpoint:
    if len(blob) < len(MAGIC) + 4 + 32 + 4 + 8 + 4 or blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint is corrupt (checksum mismatch)")
    pos = len(MAGIC)
    (version,) = struct.unpack_from("<I", body, pos)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos += 4
    digest = body[pos:pos + 32].hex()
    pos += 32
    try:
        (n,) = struct.unpack_from("<I", body, pos)
        pos += 4
        tensors = {}
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", body, pos)
            name = body[pos + 2:pos + 2 + ln].decode("utf-8")
            pos += 2 + ln
            (ndim,) = struct.unpack_from("<B", body, pos)
            shape = struct.unpack_from(f"<{ndim}Q", body, pos + 1)
            pos += 1 + 8 * ndim
            count = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(body, dtype="<f8", count=count, offset=pos).reshape(shape)
            tensors[name] = arr.astype(np.float64)
            pos += 8 * count
        (ml,) = struct.unpack_from("<Q", body, pos)
        meta = json.loads(body[pos + 8:pos + 8 + ml].decode("utf-8"))
        pos += 8 + ml
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"checkpoint is malformed: {exc}") from None
    if pos != len(body):
        raise CheckpointError("checkpoint has trailing bytes")
    return Checkpoint(digest, tensors, meta)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    os.replace(tmp, path)


def load_checkpoint(path, expect_hash: str | None = None) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    ckpt = from_bytes(blob)
    if expect_hash is not None and ckpt.config_hash != expect_hash:
        raise CheckpointError("config hash mismatch")
    return ckpt
