"""In-memory volumes and the SGV1 on-disk format.

SGV1 layout, little-endian, 52-byte header followed by the payload::

    offset  size  field
    0       4     magic b"SGV1"
    4       4     u32 format version (1)
    8       12    u32 d, h, w
    20      4     u32 channels
    24      24    f64 spacing (mm) per axis d, h, w
    48      3     ASCII orientation code, e.g. b"RAS"
    51      1     u8 dtype tag: 0 = float64, 1 = uint8
    52      ...   payload, C order (channel, d, h, w)

Float volumes use tag 0; masks use tag 1 with exactly one channel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"SGV1"
VERSION = 1
_HEADER = struct.Struct("<4sI3II3d3sB")
DTYPE_FLOAT64, DTYPE_UINT8 = 0, 1
_AXIS_PAIRS = {"R": "L", "L": "R", "A": "P", "P": "A", "S": "I", "I": "S"}
_AXIS_GROUP = {"R": 0, "L": 0, "A": 1, "P": 1, "S": 2, "I": 2}


class VolumeFormatError(ValueError):
    pass


class BadMagicError(VolumeFormatError):
    pass


class UnsupportedVersionError(VolumeFormatError):
    pass


class TruncatedFileError(VolumeFormatError):
    pass


class PayloadSizeError(VolumeFormatError):
    pass


def validate_orientation(code: str) -> str:
    if not isinstance(code, str) or len(code) != 3 or any(c not in _AXIS_GROUP for c in code):
        raise ValueError(f"malformed orientation code {code!r}")
    if sorted(_AXIS_GROUP[c] for c in code) != [0, 1, 2]:
        raise ValueError(f"orientation code {code!r} must name each anatomical axis once")
    return code


@dataclass
class Volume:
    """Multi-channel image, ``data`` shaped ``(channels, d, h, w)``."""

    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    orientation: str = "RAS"

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 4:
            raise ValueError(f"volume data must be (channels, d, h, w), got {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise ValueError(f"spacing must be three positive values, got {self.spacing}")
        validate_orientation(self.orientation)

    @property
    def dims(self) -> tuple:
        return tuple(self.data.shape[1:])

    @property
    def channels(self) -> int:
        return self.data.shape[0]


@dataclass
class MaskVolume:
    data: np.ndarray
    spacing: tuple = (1.0, 1.0, 1.0)
    orientation: str = "RAS"

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"mask data must be (d, h, w), got {data.shape}")
        if data.dtype != np.uint8:
            if not np.isin(data, (0, 1)).all():
                raise ValueError("mask values must be 0 or 1")
            data = data.astype(np.uint8)
        self.data = data
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise ValueError(f"spacing must be three positive values, got {self.spacing}")
        validate_orientation(self.orientation)

    @property
    def dims(self) -> tuple:
        return tuple(self.data.shape)


def to_bytes(vol) -> bytes:
    if isinstance(vol, MaskVolume):
        payload, tag, channels = np.ascontiguousarray(vol.data, dtype=np.uint8).tobytes(), DTYPE_UINT8, 1
    else:
        payload, tag, channels = np.ascontiguousarray(vol.data, dtype="<f8").tobytes(), DTYPE_FLOAT64, vol.channels
    header = _HEADER.pack(MAGIC, VERSION, *vol.dims, channels, *vol.spacing, vol.orientation.encode("ascii"), tag)
    return header + payload


def from_bytes(buf: bytes):
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError("not an SGV1 file (bad magic)")
    if len(buf) < _HEADER.size:
        raise TruncatedFileError(f"header needs {_HEADER.size} bytes, file has {len(buf)}")
    _, version, d, h, w, channels, s0, s1, s2, code, tag = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported SGV version {version}")
    if tag not in (DTYPE_FLOAT64, DTYPE_UINT8):
        raise VolumeFormatError(f"unknown dtype tag {tag}")
    itemsize = 8 if tag == DTYPE_FLOAT64 else 1
    payload = buf[_HEADER.size :]
    if len(payload) % itemsize:
        raise TruncatedFileError("payload ends in the middle of a value")
    expected = channels * d * h * w
    if len(payload) // itemsize != expected:
        raise PayloadSizeError(
            f"header promises {expected} values ({channels}x{d}x{h}x{w}), payload holds {len(payload) // itemsize}"
        )
    try:
        orientation = code.decode("ascii")
        spacing = (s0, s1, s2)
        if tag == DTYPE_UINT8:
            if channels != 1:
                raise VolumeFormatError("uint8 volumes must have one channel")
            return MaskVolume(np.frombuffer(payload, dtype=np.uint8).reshape(d, h, w).copy(), spacing, orientation)
        data = np.frombuffer(payload, dtype="<f8").reshape(channels, d, h, w).astype(np.float64)
        return Volume(data, spacing, orientation)
    except (ValueError, UnicodeDecodeError) as exc:
        if isinstance(exc, VolumeFormatError):
            raise
        raise VolumeFormatError(str(exc)) from exc


def write_volume(vol, path) -> None:
    Path(path).write_bytes(to_bytes(vol))


def read_volume(path):
    return from_bytes(Path(path).read_bytes())
