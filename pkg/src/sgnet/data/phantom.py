"""Seeded two-channel brain phantoms with small bright lesions.

Channel 0 mimics contrast-enhanced T1 (bright solid or rim-enhancing
lesions), channel 1 mimics FLAIR (a brighter halo two voxels around each
lesion). Lesion placement is rejection-sampled until the foreground
fraction of the whole grid lands inside ``fraction_band``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..metrics import dilate
from .volume import MaskVolume, Volume

TARGET_FRACTION = 0.0128

BACKGROUND = 0.3
LESION_CORE = 0.9
LESION_RIM = 1.0
HALO = 0.55
TEXTURE_AMPLITUDE = 0.05


class PhantomError(RuntimeError):
    """No lesion layout reached the target fraction within the retry limit."""


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple = (64, 64, 64)
    brain_semi_axes: tuple = (0.85, 0.85, 0.85)  # fraction of half-dims
    lesion_count: tuple = (1, 5)
    lesion_radius: tuple = (2.0, 8.0)  # voxels
    target_fraction: float = TARGET_FRACTION
    fraction_band: tuple = (0.6 * TARGET_FRACTION, 1.4 * TARGET_FRACTION)
    noise_sd: float = 0.03
    bias_amplitude: float = 0.1
    seed: int = 0
    max_retries: int = 5000

    def __post_init__(self):
        lo, hi = self.fraction_band
        if not 0 < lo <= self.target_fraction <= hi < 1:
            raise ValueError("fraction_band must bracket target_fraction inside (0, 1)")
        if not 1 <= self.lesion_count[0] <= self.lesion_count[1]:
            raise ValueError("lesion_count must be an increasing range starting at >= 1")
        if not 0 < self.lesion_radius[0] <= self.lesion_radius[1]:
            raise ValueError("lesion_radius must be a positive increasing range")


def _grid(dims):
    return np.meshgrid(*[np.arange(n, dtype=np.float64) for n in dims], indexing="ij")


def brain_mask(spec: PhantomSpec) -> np.ndarray:
    dims = np.asarray(spec.dims, dtype=np.float64)
    center = (dims - 1) / 2
    semi = np.asarray(spec.brain_semi_axes) * dims / 2
    coords = _grid(spec.dims)
    r2 = sum(((c - m) / s) ** 2 for c, m, s in zip(coords, center, semi))
    return r2 <= 1.0


def _smooth_field(rng, coords, dims, n_waves: int = 4, max_cycles: float = 2.0) -> np.ndarray:
    """Sum of random low-frequency cosines, scaled to [-1, 1]."""
    field = np.zeros(dims)
    for _ in range(n_waves):
        freq = rng.uniform(-max_cycles, max_cycles, 3) * 2 * np.pi / np.asarray(dims)
        phase = rng.uniform(0, 2 * np.pi)
        field += np.cos(sum(f * c for f, c in zip(freq, coords)) + phase)
    peak = np.abs(field).max()
    return field / peak if peak > 0 else field


def _sample_center(rng, center, semi, margin):
    room = semi - margin
    if np.any(room <= 0):
        return None
    while True:
        u = rng.uniform(-1.0, 1.0, 3)
        if u @ u <= 1.0:
            return center + room * u


def _place_lesions(spec: PhantomSpec, rng, coords, brain):
    dims = np.asarray(spec.dims, dtype=np.float64)
    center = (dims - 1) / 2
    semi = np.asarray(spec.brain_semi_axes) * dims / 2
    total = brain.size
    lo, hi = spec.fraction_band
    for _ in range(spec.max_retries):
        k = int(rng.integers(spec.lesion_count[0], spec.lesion_count[1] + 1))
        mask = np.zeros(spec.dims, dtype=bool)
        rim = np.zeros(spec.dims, dtype=bool)
        ok = True
        for _ in range(k):
            radius = rng.uniform(*spec.lesion_radius)
            axes = radius * rng.uniform(0.8, 1.2, 3)
            c = _sample_center(rng, center, semi, axes.max() + 1.0)
            if c is None:
                ok = False
                break
            rho2 = sum(((x - m) / a) ** 2 for x, m, a in zip(coords, c, axes))
            lesion = (rho2 <= 1.0) & brain
            mask |= lesion
            if rng.random() < 0.5:
                rim |= lesion & (rho2 > 0.45)
        if not ok:
            continue
        frac = mask.sum() / total
        if lo <= frac <= hi:
            return mask, rim
    raise PhantomError(
        f"no lesion layout within fraction band {spec.fraction_band} after {spec.max_retries} tries for dims {spec.dims}"
    )


def generate_phantom(spec: PhantomSpec) -> tuple[Volume, MaskVolume]:
    """Two-channel image and exact lesion mask, bit-reproducible from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    coords = _grid(spec.dims)
    brain = brain_mask(spec)
    mask, rim = _place_lesions(spec, rng, coords, brain)

    t1 = np.where(brain, BACKGROUND + TEXTURE_AMPLITUDE * _smooth_field(rng, coords, spec.dims), 0.0)
    t1 = np.where(mask, LESION_CORE, t1)
    t1 = np.where(rim, LESION_RIM, t1)

    flair = np.where(brain, BACKGROUND + TEXTURE_AMPLITUDE * _smooth_field(rng, coords, spec.dims), 0.0)
    halo = dilate(mask, 2) & brain
    flair = np.where(halo, HALO + 0.5 * TEXTURE_AMPLITUDE * _smooth_field(rng, coords, spec.dims), flair)

    bias = 1.0 + spec.bias_amplitude * _smooth_field(rng, coords, spec.dims, n_waves=2, max_cycles=0.5)
    image = np.stack([t1, flair]) * bias
    image += rng.normal(0.0, spec.noise_sd, image.shape)
    return Volume(image, (1.0, 1.0, 1.0), "RAS"), MaskVolume(mask.astype(np.uint8), (1.0, 1.0, 1.0), "RAS")


def foreground_fraction(mask: MaskVolume) -> float:
    return float(mask.data.sum() / mask.data.size)
