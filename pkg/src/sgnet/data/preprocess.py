"""Canonical orientation, isotropic resampling and percentile normalisation."""

from __future__ import annotations

import math

import numpy as np

from .volume import _AXIS_GROUP, _AXIS_PAIRS, MaskVolume, Volume, validate_orientation

CANONICAL = "RAS"


def _axis_map(src: str, dst: str):
    """For each destination axis: (source axis, flip?)."""
    validate_orientation(src)
    validate_orientation(dst)
    out = []
    for letter in dst:
        for s, sl in enumerate(src):
            if sl == letter:
                out.append((s, False))
                break
            if sl == _AXIS_PAIRS[letter]:
                out.append((s, True))
                break
    return out


def reorient(vol, code: str):
    """Permute and flip axes so the volume is expressed in orientation ``code``."""
    mapping = _axis_map(vol.orientation, code)
    spatial_offset = 1 if isinstance(vol, Volume) else 0
    order = [s for s, _ in mapping]
    data = vol.data.transpose(list(range(spatial_offset)) + [s + spatial_offset for s in order])
    for t, (_, flip) in enumerate(mapping):
        if flip:
            data = np.flip(data, axis=t + spatial_offset)
    spacing = tuple(vol.spacing[s] for s in order)
    return type(vol)(np.ascontiguousarray(data), spacing, code)


def reorient_to_canonical(vol):
    return reorient(vol, CANONICAL)


def _output_dim(n: int, spacing: float, target: float) -> int:
    return max(1, int(math.floor(n * spacing / target + 0.5)))


def _sample_coords(n_in: int, n_out: int, spacing: float, target: float) -> np.ndarray:
    # voxel-centre alignment; identity when spacing == target
    x = (np.arange(n_out) + 0.5) * (target / spacing) - 0.5
    return np.clip(x, 0.0, n_in - 1)


def _resample_axis(data: np.ndarray, axis: int, coords: np.ndarray, mode: str) -> np.ndarray:
    n = data.shape[axis]
    if mode == "nearest":
        idx = np.clip(np.floor(coords + 0.5).astype(np.int64), 0, n - 1)
        return np.take(data, idx, axis=axis)
    i0 = np.floor(coords).astype(np.int64)
    i1 = np.minimum(i0 + 1, n - 1)
    t = coords - i0
    shape = [1] * data.ndim
    shape[axis] = -1
    a = np.take(data, i0, axis=axis)
    b = np.take(data, i1, axis=axis)
    # a + t * (b - a) keeps constant fields exactly constant
    return a + t.reshape(shape) * (b - a)


def resample_isotropic(vol, target: float = 1.0, mode: str | None = None):
    """Resample onto an isotropic ``target`` mm grid.

    Trilinear for images and nearest-neighbour for masks unless ``mode`` says
    otherwise.
    """
    if target <= 0 or min(vol.spacing) <= 0:
        raise ValueError("spacing and target must be positive")
    if vol.orientation != CANONICAL:
        raise ValueError(f"resample expects {CANONICAL} orientation, got {vol.orientation}")
    is_mask = isinstance(vol, MaskVolume)
    mode = mode or ("nearest" if is_mask else "trilinear")
    if mode not in ("nearest", "trilinear"):
        raise ValueError(f"unknown resampling mode {mode!r}")
    offset = 0 if is_mask else 1
    data = vol.data
    for ax, (n, sp) in enumerate(zip(vol.dims, vol.spacing)):
        n_out = _output_dim(n, sp, target)
        if n_out == n and sp == target:
            continue
        data = _resample_axis(data, ax + offset, _sample_coords(n, n_out, sp, target), mode)
    if is_mask and mode == "trilinear":
        data = (data >= 0.5).astype(np.uint8)
    return type(vol)(np.ascontiguousarray(data), (target,) * 3, vol.orientation)


def normalize(vol: Volume, p_low: float = 0.5, p_high: float = 99.5) -> Volume:
    """Clip each channel to its percentile range, then min-max scale to [0, 1].

    A channel whose clipping range collapses maps to all zeros.
    """
    out = np.empty_like(vol.data)
    for c in range(vol.channels):
        ch = vol.data[c]
        lo, hi = np.percentile(ch, [p_low, p_high], method="linear")
        if hi > lo:
            out[c] = (np.clip(ch, lo, hi) - lo) / (hi - lo)
        else:
            out[c] = 0.0
    return Volume(out, vol.spacing, vol.orientation)


def preprocess(vol: Volume, mask: MaskVolume | None = None, target: float = 1.0, p_low: float = 0.5, p_high: float = 99.5):
    """Reorient to RAS, resample to isotropic ``target`` mm, normalise intensities."""
    v = normalize(resample_isotropic(reorient_to_canonical(vol), target), p_low, p_high)
    if mask is None:
        return v
    if mask.dims != vol.dims:
        raise ValueError(f"mask dims {mask.dims} do not match image dims {vol.dims}")
    m = resample_isotropic(reorient_to_canonical(mask), target, "nearest")
    return v, m
