"""Shared oracles for the test suite."""

import numpy as np

from sgnet import autodiff as ad
from sgnet.autodiff import Tensor
from sgnet.objective import hybrid_loss


def model_grad_check(model, x, target, n_samples=10, seed=0, step=1e-5, floor=1e-6, max_redraws=50):
    """Central differences on ``n_samples`` randomly chosen parameter entries.

    Returns ``(worst relative error, per-entry details, redraws)`` against the
    analytic gradient of the hybrid loss, in train mode. ReLU and max-pool
    make the loss piecewise smooth; an entry whose differences at ``step``
    and ``step / 2`` disagree sits on a kink inside the stencil, where a
    finite difference says nothing about the derivative, and is redrawn.
    Conv biases ahead of batchnorm have an exact zero gradient; their
    numeric estimate is pure roundoff, about eps * loss / step.
    """
    model.train()
    model.zero_grad()
    ad.backward(hybrid_loss(model.forward(Tensor(x)), target).total)
    named = list(model.named_parameters())
    rng = np.random.default_rng(seed)

    def loss_at():
        with ad.no_grad():
            return float(hybrid_loss(model.forward(Tensor(x)), target).total.data[0])

    def central(flat, i, h):
        orig = flat[i]
        flat[i] = orig + h
        fp = loss_at()
        flat[i] = orig - h
        fm = loss_at()
        flat[i] = orig
        return (fp - fm) / (2 * h)

    picks = rng.choice(len(named), size=min(n_samples, len(named)), replace=False)
    worst, details, redraws = 0.0, [], 0
    for k in picks:
        name, p = named[k]
        flat = p.data.reshape(-1)
        for _ in range(max_redraws):
            i = int(rng.integers(p.size))
            n1, n2 = central(flat, i, step), central(flat, i, step / 2)
            if abs(n1 - n2) <= 1e-3 * max(abs(n1), abs(n2), floor):
                break
            redraws += 1
        analytic = float(p.grad.reshape(-1)[i])
        err = abs(analytic - n1) / max(abs(analytic), abs(n1), floor)
        details.append((name, i, analytic, n1, err))
        worst = max(worst, err)
    return worst, details, redraws


def brute_force_directed(src_pts, dst_pts, spacing):
    a = np.asarray(src_pts, float) * spacing
    b = np.asarray(dst_pts, float) * spacing
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1).min(1))


def brute_confusion(pred, gt):
    tp = fp = fn = tn = 0
    for p, g in zip(pred.reshape(-1).tolist(), gt.reshape(-1).tolist()):
        if p and g:
            tp += 1
        elif p:
            fp += 1
        elif g:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn
