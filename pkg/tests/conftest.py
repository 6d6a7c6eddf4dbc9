import os

os.environ.setdefault("SGNET_NUM_THREADS", "1")

import numpy as np
import pytest

from sgnet import _runtime
from sgnet.data import MaskVolume, Volume

_runtime.configure_threads()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=[b for b in _runtime.BACKENDS if b == "numpy" or _runtime.HAS_NUMBA])
def backend(request):
    with _runtime.use_backend(request.param):
        yield request.param


def make_volume(data, spacing=(1.0, 1.0, 1.0), orientation="RAS"):
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 3:
        data = data[None]
    return Volume(data, tuple(spacing), orientation)


def make_mask(data, spacing=(1.0, 1.0, 1.0), orientation="RAS"):
    return MaskVolume(np.asarray(data, dtype=np.uint8), tuple(spacing), orientation)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
