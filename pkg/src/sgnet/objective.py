"""Hybrid Dice + binary cross-entropy loss for heavily imbalanced masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, _record, _sigmoid, add

DICE_EPS = 1e-5


@dataclass
class LossValue:
    total: Tensor
    dice_term: float
    ce_term: float


def _check(logits: Tensor, target, op: str) -> np.ndarray:
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    if t.shape != logits.shape:
        raise ShapeError(f"{op}: logits {logits.shape} and target {t.shape} differ")
    return t


def dice_loss(logits: Tensor, target, eps: float = DICE_EPS) -> Tensor:
    """Soft Dice loss on sigmoid probabilities, computed per sample then averaged."""
    t = _check(logits, target, "dice_loss")
    n = logits.shape[0]
    p = _sigmoid(logits.data)
    axes = tuple(range(1, p.ndim))
    inter = (p * t).sum(axis=axes)
    denom = p.sum(axis=axes) + t.sum(axis=axes) + eps
    per_sample = 1.0 - (2.0 * inter + eps) / denom
    value = np.array([per_sample.mean()])

    def _backward(g):
        bshape = (n,) + (1,) * (p.ndim - 1)
        num = (2.0 * inter + eps).reshape(bshape)
        den = denom.reshape(bshape)
        dp = -(2.0 * t * den - num) / (den * den)
        return (g[0] / n * dp * p * (1.0 - p),)

    return _record("dice_loss", value, (logits,), _backward)


def bce_loss(logits: Tensor, target) -> Tensor:
    """Voxel-mean binary cross-entropy in the overflow-free logit form."""
    t = _check(logits, target, "bce_loss")
    z = logits.data
    terms = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    value = np.array([terms.mean()])

    def _backward(g):
        return (g[0] * (_sigmoid(z) - t) / z.size,)

    return _record("bce_loss", value, (logits,), _backward)


def hybrid_loss(logits: Tensor, target) -> LossValue:
    """Unweighted sum of :func:`dice_loss` and :func:`bce_loss`."""
    d = dice_loss(logits, target)
    c = bce_loss(logits, target)
    tot = add(d, c)
    return LossValue(total=tot, dice_term=float(d.data[0]), ce_term=float(c.data[0]))
