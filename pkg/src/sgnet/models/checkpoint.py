"""Byte-stable checkpoint format.

Layout (all integers little-endian)::

    b"SGCK"                      magic
    u32                          format version (1)
    u32, bytes                   header length, UTF-8 JSON (sorted keys):
                                 {"format": 1, "spec": {...}, "meta": {...}}
    u32                          block count
    per block:
      u32, bytes                 name length, UTF-8 name
      u8                         kind: 0 parameter, 1 running buffer
      u32, u64 * ndim            ndim, dims
      f64 * prod(dims)           values, C order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import ArchitectureSpec, SegmentationNet, build_model

MAGIC = b"SGCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _blocks(model: SegmentationNet):
    for name, t in model.named_parameters():
        yield name, 0, t.data
    for name, b in model.named_buffers():
        yield name, 1, b


def to_bytes(model: SegmentationNet, meta: dict | None = None) -> bytes:
    header = json.dumps(
        {"format": VERSION, "spec": model.spec.to_dict(), "meta": meta or {}},
        sort_keys=True, separators=(",", ":"),
    ).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(header)), header]
    blocks = list(_blocks(model))
    parts.append(struct.pack("<I", len(blocks)))
    for name, kind, arr in blocks:
        nb = name.encode()
        parts.append(struct.pack("<I", len(nb)) + nb)
        parts.append(struct.pack("<BI", kind, arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(buf: bytes) -> tuple[SegmentationNet, dict]:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, hlen = r.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(r.take(hlen))
    model = build_model(ArchitectureSpec.from_dict(header["spec"]), seed=0)
    params = dict(model.named_parameters())
    buffers = dict(model.named_buffers())
    (count,) = r.unpack("<I")
    seen = set()
    for _ in range(count):
        (nlen,) = r.unpack("<I")
        name = r.take(nlen).decode()
        kind, ndim = r.unpack("<BI")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        values = np.frombuffer(r.take(8 * int(np.prod(shape))), dtype="<f8").reshape(shape)
        target = params[name].data if kind == 0 and name in params else buffers.get(name) if kind == 1 else None
        if target is None:
            raise CheckpointError(f"checkpoint block {name!r} does not exist in the model")
        if target.shape != tuple(shape):
            raise CheckpointError(f"block {name!r} has shape {shape}, model expects {target.shape}")
        target[...] = values
        seen.add(name)
    missing = (set(params) | set(buffers)) - seen
    if missing:
        raise CheckpointError(f"checkpoint lacks blocks: {sorted(missing)[:5]}")
    if r.pos != len(buf):
        raise CheckpointError("trailing bytes after last block")
    return model, header.get("meta", {})


def save_checkpoint(model: SegmentationNet, path, meta: dict | None = None) -> None:
    Path(path).write_bytes(to_bytes(model, meta))


def load_checkpoint(path) -> tuple[SegmentationNet, dict]:
    return from_bytes(Path(path).read_bytes())
