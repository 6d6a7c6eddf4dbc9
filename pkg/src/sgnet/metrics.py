"""Overlap metrics and the 95th-percentile symmetric surface distance.

Degenerate cases follow fixed conventions instead of raising, so every
subject produces a number and cohort aggregates stay totally ordered:

* empty prediction and empty ground truth: dice = precision = recall = 1,
  hd95 = 0;
* exactly one mask empty: the undefined ratio is reported as 0, and hd95 is
  the physical diagonal of the volume. Each substitution sets a flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class SubjectMetrics:
    dice: float
    precision: float
    recall: float
    hd95: float
    flags: list = field(default_factory=list)


def _mask(m) -> np.ndarray:
    data = getattr(m, "data", m)
    return np.asarray(data).astype(bool)


def confusion(pred, gt) -> ConfusionCounts:
    p, g = _mask(pred), _mask(gt)
    if p.shape != g.shape:
        raise ValueError(f"mask dims differ: {p.shape} vs {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def overlap_metrics(counts: ConfusionCounts, flags: list | None = None) -> tuple[float, float, float]:
    """Dice, precision and recall, with the conventions in the module docstring."""
    tp, fp, fn = counts.tp, counts.fp, counts.fn
    flags = flags if flags is not None else []
    if tp + fp + fn == 0:
        flags.append("both_empty")
        return 1.0, 1.0, 1.0
    dice = 2 * tp / (2 * tp + fp + fn)
    if tp + fp == 0:
        flags.append("pred_empty")
        precision = 0.0
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        flags.append("gt_empty")
        recall = 0.0
    else:
        recall = tp / (tp + fn)
    return dice, precision, recall


def surface_voxels(mask) -> np.ndarray:
    """Boolean map of foreground voxels with at least one background 6-neighbour.

    Voxels on the volume border count as touching background.
    """
    m = _mask(mask)
    padded = np.pad(m, 1, constant_values=False)
    interior = np.ones_like(m)
    core = (slice(1, -1),) * m.ndim
    for axis in range(m.ndim):
        for shift in (-1, 1):
            interior &= np.roll(padded, shift, axis=axis)[core]
    return m & ~interior


def edt(mask, spacing=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Euclidean distance (mm) from every voxel centre to the nearest source voxel."""
    m = _mask(mask)
    if not m.any():
        raise ValueError("distance transform needs at least one source voxel")
    return np.sqrt(kernels.squared_edt(m, tuple(float(s) for s in spacing)))


def directed_distances(src, dst, spacing) -> np.ndarray:
    """Distance from each surface voxel of ``src`` to the surface of ``dst``."""
    a, b = surface_voxels(src), surface_voxels(dst)
    field_b = edt(b, spacing)
    return field_b[a]


def diagonal_mm(shape, spacing) -> float:
    return float(np.sqrt(np.sum((np.asarray(shape) * np.asarray(spacing, dtype=float)) ** 2)))


def hausdorff_percentile(pred, gt, spacing=(1.0, 1.0, 1.0), q: float = 95.0, flags: list | None = None) -> float:
    """``q``-th percentile (linear interpolation) of the pooled directed surface distances."""
    p, g = _mask(pred), _mask(gt)
    if p.shape != g.shape:
        raise ValueError(f"mask dims differ: {p.shape} vs {g.shape}")
    flags = flags if flags is not None else []
    pe, ge = not p.any(), not g.any()
    if pe and ge:
        return 0.0
    if pe or ge:
        flags.append("hd95_sentinel")
        return diagonal_mm(p.shape, spacing)
    d = np.concatenate([directed_distances(p, g, spacing), directed_distances(g, p, spacing)])
    return float(np.percentile(d, q, method="linear"))


def hd95(pred, gt, spacing=(1.0, 1.0, 1.0), flags: list | None = None) -> float:
    return hausdorff_percentile(pred, gt, spacing, 95.0, flags)


def dilate(mask, r: int) -> np.ndarray:
    """``r`` rounds of 6-connected binary dilation; nothing grows past the border."""
    if r < 0:
        raise ValueError("dilation radius must be >= 0")
    m = _mask(mask).copy()
    for _ in range(r):
        grown = m.copy()
        for axis in range(m.ndim):
            lo = [slice(None)] * m.ndim
            hi = [slice(None)] * m.ndim
            lo[axis], hi[axis] = slice(0, -1), slice(1, None)
            grown[tuple(lo)] |= m[tuple(hi)]
            grown[tuple(hi)] |= m[tuple(lo)]
        m = grown
    return m


def subject_metrics(pred, gt, spacing=(1.0, 1.0, 1.0)) -> SubjectMetrics:
    flags: list = []
    dice, precision, recall = overlap_metrics(confusion(pred, gt), flags)
    dist = hd95(pred, gt, spacing, flags)
    return SubjectMetrics(dice, precision, recall, dist, flags)
