"""Sliding-window planning and mean blending of overlapping patch outputs."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_PATCH = (96, 96, 32)


@dataclass(frozen=True)
class SlidingWindowPlan:
    patch: tuple
    stride: tuple
    origins: tuple  # of (z, y, x)
    dims: tuple

    def __len__(self):
        return len(self.origins)


def _axis_origins(dim: int, patch: int, stride: int) -> list:
    origins = list(range(0, dim - patch + 1, stride))
    if origins[-1] != dim - patch:
        origins.append(dim - patch)
    return origins


def plan_windows(dims, patch=DEFAULT_PATCH, overlap: float = 0.25) -> SlidingWindowPlan:
    """Origins on a regular grid per axis, last window clamped to the far edge.

    The stride is ``round_half_up(patch * (1 - overlap))`` per axis.
    """
    dims, patch = tuple(int(d) for d in dims), tuple(int(p) for p in patch)
    if len(dims) != 3 or len(patch) != 3:
        raise ValueError("dims and patch must be 3D")
    if not 0.0 <= overlap < 1.0:
        raise ValueError("overlap must lie in [0, 1)")
    for d, p in zip(dims, patch):
        if p > d:
            raise ValueError(f"patch {patch} exceeds volume dims {dims}")
    stride = tuple(max(1, int(math.floor(p * (1.0 - overlap) + 0.5))) for p in patch)
    per_axis = [_axis_origins(d, p, s) for d, p, s in zip(dims, patch, stride)]
    return SlidingWindowPlan(patch, stride, tuple(itertools.product(*per_axis)), dims)


def window_slices(origin, patch):
    return tuple(slice(o, o + p) for o, p in zip(origin, patch))


def extract(array: np.ndarray, plan: SlidingWindowPlan):
    """Yield ``array[..., window]`` for every planned window, in plan order."""
    for origin in plan.origins:
        yield array[(Ellipsis,) + window_slices(origin, plan.patch)]


def blend(blocks, plan: SlidingWindowPlan, dims=None) -> np.ndarray:
    """Per-voxel arithmetic mean of all window outputs covering that voxel.

    Blocks are ``(..., *patch)`` arrays aligned with ``plan.origins``;
    accumulation runs in plan order so the result is reproducible.
    """
    blocks = list(blocks)
    dims = tuple(dims) if dims is not None else plan.dims
    if len(blocks) != len(plan.origins):
        raise ValueError(f"plan has {len(plan.origins)} windows but {len(blocks)} blocks were given")
    lead = blocks[0].shape[:-3]
    acc = np.zeros(lead + dims)
    count = np.zeros(dims)
    for block, origin in zip(blocks, plan.origins):
        if block.shape[-3:] != plan.patch:
            raise ValueError(f"block shape {block.shape} does not match patch {plan.patch}")
        sl = window_slices(origin, plan.patch)
        acc[(Ellipsis,) + sl] += block
        count[sl] += 1
    return acc / count
