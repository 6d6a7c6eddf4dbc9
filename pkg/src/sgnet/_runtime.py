"""Execution backend and threading switches.

Two environment variables control how the hot kernels run:

``SGNET_KERNELS``
    ``numba`` (default when numba imports) or ``numpy``. Selects the
    implementation behind :mod:`sgnet.kernels`.
``SGNET_NUM_THREADS``
    Thread count for numba and BLAS. ``1`` (the default) is the deterministic
    single-executor mode used by the test and acceptance suites.
"""

from __future__ import annotations

import os
import warnings
from contextlib import contextmanager

try:
    import numba

    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the TBB shipped in some images is too old and numba warns on every launch
        numba.config.THREADING_LAYER = "workqueue"
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

BACKENDS = ("numba", "numpy")

_state = {"backend": None, "threads": None}


class PerformanceWarning(UserWarning):
    pass


def _initial_backend() -> str:
    requested = os.environ.get("SGNET_KERNELS", "").strip().lower()
    if requested and requested not in BACKENDS:
        raise ValueError(f"SGNET_KERNELS must be one of {BACKENDS}, got {requested!r}")
    if requested == "numpy":
        return "numpy"
    if not HAS_NUMBA:
        if requested == "numba":
            warnings.warn("numba is not available, falling back to numpy kernels", PerformanceWarning)
        return "numpy"
    return "numba"


def get_backend() -> str:
    if _state["backend"] is None:
        _state["backend"] = _initial_backend()
    return _state["backend"]


def set_backend(name: str) -> None:
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    _state["backend"] = name


@contextmanager
def use_backend(name: str):
    prev = get_backend()
    set_backend(name)
    try:
        yield
    finally:
        _state["backend"] = prev


def num_threads() -> int:
    if _state["threads"] is None:
        raw = os.environ.get("SGNET_NUM_THREADS", "1")
        try:
            n = int(raw)
        except ValueError as exc:
            raise ValueError(f"SGNET_NUM_THREADS must be an integer, got {raw!r}") from exc
        if n < 1:
            raise ValueError("SGNET_NUM_THREADS must be >= 1")
        _state["threads"] = n
    return _state["threads"]


def deterministic() -> bool:
    return num_threads() == 1


def configure_threads() -> None:
    """Apply the thread count to numba and to any BLAS pools numpy uses."""
    n = num_threads()
    if HAS_NUMBA:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return
    threadpool_limits(limits=n)
