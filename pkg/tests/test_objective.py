import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgnet import autodiff as ad
from sgnet.autodiff import ShapeError, Tensor
from sgnet.objective import bce_loss, dice_loss, hybrid_loss


def saturated(target):
    return Tensor(np.where(target > 0, 30.0, -30.0))


@pytest.fixture
def target(rng):
    t = (rng.random((2, 1, 4, 4, 4)) < 0.3).astype(float)
    t[:, 0, 0, 0, 0] = 1.0
    return t


def test_dice_perfect(target):
    assert dice_loss(saturated(target), target).data[0] < 1e-6


def test_dice_total_miss(target):
    assert dice_loss(Tensor(np.full(target.shape, -30.0)), target).data[0] > 0.999


def test_dice_half_probability():
    t = np.array([1, 1, 1, 1, 0, 0, 0, 0], float).reshape(1, 1, 2, 2, 2)
    eps = 1e-5
    expected = 1 - (2 * 2 + eps) / (4 + 4 + eps)
    assert dice_loss(Tensor(np.zeros_like(t)), t).data[0] == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(0.5, abs=1e-6)


def test_dice_per_sample_mean(rng):
    z = rng.standard_normal((3, 1, 2, 3, 2))
    t = (rng.random(z.shape) < 0.5).astype(float)
    each = [dice_loss(Tensor(z[i : i + 1]), t[i : i + 1]).data[0] for i in range(3)]
    assert dice_loss(Tensor(z), t).data[0] == pytest.approx(np.mean(each), abs=1e-15)


def test_bce_zero_logits_is_ln2(target):
    assert bce_loss(Tensor(np.zeros(target.shape)), target).data[0] == pytest.approx(math.log(2), abs=1e-15)


def test_bce_saturated_contribution():
    t = np.ones((1, 1, 1, 1, 1))
    assert bce_loss(Tensor(np.full(t.shape, 30.0)), t).data[0] < 1e-12


def test_bce_stable_at_extreme_logits():
    t = np.array([0.0, 1.0]).reshape(1, 1, 1, 1, 2)
    value = bce_loss(Tensor(np.array([800.0, -800.0]).reshape(t.shape)), t).data[0]
    assert value == pytest.approx(800.0)


def test_hybrid_values(target):
    assert hybrid_loss(saturated(target), target).total.data[0] < 1e-6
    t = np.array([1, 0] * 4, float).reshape(1, 1, 2, 2, 2)
    lv = hybrid_loss(Tensor(np.zeros(t.shape)), t)
    assert lv.total.data[0] == pytest.approx(0.5 + math.log(2), abs=1e-5)
    assert lv.total.data[0] == lv.dice_term + lv.ce_term


@pytest.mark.parametrize("fn", [dice_loss, bce_loss, lambda z, t: hybrid_loss(z, t).total])
def test_loss_gradcheck(fn, target):
    assert ad.grad_check(lambda z: fn(z, target), [target.shape], seed=2) < 1e-6


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        dice_loss(Tensor(np.zeros((1, 1, 2, 2, 2))), np.zeros((1, 1, 2, 2, 1)))
    with pytest.raises(ShapeError):
        bce_loss(Tensor(np.zeros((1, 1, 2, 2, 2))), np.zeros((1, 1, 2, 2, 1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 20))
def test_bounds_and_symmetries(seed, scale):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((1, 1, 3, 4, 5)) * scale
    t = (rng.random(z.shape) < 0.3).astype(float)
    d = dice_loss(Tensor(z), t).data[0]
    c = bce_loss(Tensor(z), t).data[0]
    assert 0.0 <= d <= 1.0 + 1e-5 and c >= 0.0
    perm = rng.permutation(z.size)
    zp, tp = z.reshape(-1)[perm].reshape(z.shape), t.reshape(-1)[perm].reshape(z.shape)
    assert dice_loss(Tensor(zp), tp).data[0] == pytest.approx(d, rel=1e-12, abs=1e-15)
    shift = (0, 0, 1, 2, 3)
    zs, ts = np.roll(z, shift, axis=(0, 1, 2, 3, 4)), np.roll(t, shift, axis=(0, 1, 2, 3, 4))
    assert dice_loss(Tensor(zs), ts).data[0] == pytest.approx(d, rel=1e-12, abs=1e-15)
    assert bce_loss(Tensor(zs), ts).data[0] == pytest.approx(c, rel=1e-12, abs=1e-15)
