"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The active path follows :func:`sgnet._runtime.get_backend`, so flipping
``SGNET_KERNELS=numpy`` (or calling :func:`sgnet._runtime.set_backend`)
swaps every kernel at once. Both paths agree to within rounding (1e-12
relative on the test shapes).
"""

from __future__ import annotations

import numpy as np

from .. import _runtime
from . import _numpy_impl

if _runtime.HAS_NUMBA:
    from . import _numba_impl
else:  # pragma: no cover
    _numba_impl = None


def _impl():
    return _numba_impl if _runtime.get_backend() == "numba" else _numpy_impl


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def conv3d_forward(xp: np.ndarray, w: np.ndarray, stride: int = 1) -> np.ndarray:
    """Cross-correlate an already padded input with ``w`` (no bias)."""
    return _impl().conv3d_forward(_c(xp), _c(w), int(stride))


def conv3d_grad_input(g: np.ndarray, w: np.ndarray, xp_shape, stride: int = 1) -> np.ndarray:
    """Gradient w.r.t. the padded input."""
    return _impl().conv3d_grad_input(_c(g), _c(w), tuple(int(s) for s in xp_shape), int(stride))


def conv3d_grad_weight(xp: np.ndarray, g: np.ndarray, stride: int, K: int) -> np.ndarray:
    return _impl().conv3d_grad_weight(_c(xp), _c(g), int(stride), int(K))


def edt_pass(f: np.ndarray, spacing: float) -> np.ndarray:
    """One separable squared-distance pass along the last axis of ``f``."""
    f2 = _c(f.reshape(-1, f.shape[-1]))
    return _impl().edt_pass(f2, float(spacing)).reshape(f.shape)


def squared_edt(sources: np.ndarray, spacing) -> np.ndarray:
    """Exact squared Euclidean distance from every voxel to the nearest source."""
    f = np.where(sources, 0.0, np.inf)
    for axis in range(f.ndim):
        moved = np.moveaxis(f, axis, -1)
        f = np.moveaxis(edt_pass(moved, spacing[axis]), -1, axis)
    return f
