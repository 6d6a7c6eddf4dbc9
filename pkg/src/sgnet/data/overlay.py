"""Binary PPM (P6) slice overlays for quick visual checks."""

from __future__ import annotations

from pathlib import Path

import numpy as np

GT_COLOR = (0, 255, 0)
PRED_COLOR = (255, 0, 0)
BOTH_COLOR = (255, 255, 0)


def contour_2d(mask2d: np.ndarray) -> np.ndarray:
    """Foreground pixels with a background 4-neighbour (image border counts as background)."""
    m = mask2d.astype(bool)
    p = np.pad(m, 1, constant_values=False)
    inner = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return m & ~inner


def render_overlay(volume, mask, pred, axis: int, slice_index: int, channel: int = 0) -> bytes:
    dims = volume.dims
    if not 0 <= axis < 3:
        raise ValueError("axis must be 0, 1 or 2")
    if not 0 <= slice_index < dims[axis]:
        raise IndexError(f"slice {slice_index} out of range for axis {axis} of size {dims[axis]}")
    for m in (mask, pred):
        if m is not None and tuple(m.dims) != tuple(dims):
            raise ValueError(f"mask dims {m.dims} do not match volume dims {dims}")
    img = volume.data[channel]
    lo, hi = float(img.min()), float(img.max())
    sl = np.take(img, slice_index, axis=axis)
    gray = np.zeros(sl.shape, dtype=np.uint8) if hi <= lo else np.floor((sl - lo) / (hi - lo) * 255.0 + 0.5).astype(np.uint8)
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    cg = contour_2d(np.take(mask.data, slice_index, axis=axis)) if mask is not None else np.zeros(sl.shape, bool)
    cp = contour_2d(np.take(pred.data, slice_index, axis=axis)) if pred is not None else np.zeros(sl.shape, bool)
    rgb[cg & ~cp] = GT_COLOR
    rgb[cp & ~cg] = PRED_COLOR
    rgb[cg & cp] = BOTH_COLOR
    h, w = gray.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def export_overlay(volume, mask, pred, axis: int, slice_index: int, path, channel: int = 0) -> bytes:
    data = render_overlay(volume, mask, pred, axis, slice_index, channel)
    Path(path).write_bytes(data)
    return data


def read_ppm(data: bytes) -> np.ndarray:
    """Parse the P6 layout written above back into an ``(h, w, 3)`` array."""
    magic, size, maxval, rest = data.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ValueError("not an 8-bit P6 pixmap")
    w, h = (int(v) for v in size.split())
    return np.frombuffer(rest, dtype=np.uint8).reshape(h, w, 3)
