"""Minimal reverse-mode differentiation over dense float64 arrays.

Every primitive returns a :class:`Tensor` and, when any input requires a
gradient, records a node stamped with a global sequence number. Calling
:func:`backward` walks the recorded nodes reachable from the root in exact
reverse recording order and accumulates gradients additively into leaves.

Activations are rank-5 ``(n, c, d, h, w)`` arrays; parameters may be rank 1
or 2 (biases, dense weights).
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from . import kernels

_seq = itertools.count()
_grad_enabled = True


class ShapeError(ValueError):
    """Raised when operand shapes violate a primitive's contract."""


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf."""


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class _Node:
    __slots__ = ("seq", "op", "parents", "backward")

    def __init__(self, op, parents, backward):
        self.seq = next(_seq)
        self.op = op
        self.parents = parents
        self.backward = backward


class Tensor:
    """Dense float64 array that can take part in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "node", "name", "trainable", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: _Node | None = None
        self.name = name
        self.trainable = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)


Parameter = Tensor


def parameter(data, name: str) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(op: str, data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = _Node(op, tuple(parents), backward)
    return out


def backward(root: Tensor, grad: np.ndarray | None = None) -> None:
    """Accumulate d(root)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if not root.requires_grad:
        raise ValueError("root does not require grad")
    if grad is None:
        if root.size != 1:
            raise ShapeError("implicit gradient only defined for scalar roots")
        grad = np.ones_like(root.data)
    nodes = {}
    stack = [root]
    while stack:
        t = stack.pop()
        if t.node is None or id(t) in nodes:
            continue
        nodes[id(t)] = t
        stack.extend(p for p in t.node.parents if p.requires_grad)
    order = sorted(nodes.values(), key=lambda t: t.node.seq, reverse=True)
    pending = {id(root): np.asarray(grad, dtype=np.float64)}
    for t in order:
        g = pending.pop(id(t), None)
        if g is None:
            continue
        parent_grads = t.node.backward(g)
        for p, gp in zip(t.node.parents, parent_grads):
            if gp is None or not p.requires_grad:
                continue
            if p.node is None:
                if p.grad is None:
                    p.grad = np.array(gp, dtype=np.float64)
                else:
                    p.grad += gp
            elif id(p) in pending:
                pending[id(p)] = pending[id(p)] + gp
            else:
                pending[id(p)] = gp
    if root.node is None:
        root.grad = grad if root.grad is None else root.grad + grad


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_rank5(x: Tensor, op: str):
    if x.data.ndim != 5:
        raise ShapeError(f"{op}: expected (n, c, d, h, w) input, got shape {x.shape}")


# ---------------------------------------------------------------- convolution


def conv3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """3D cross-correlation, weight ``(c_out, c_in, k, k, k)``.

    Odd kernels take ``padding`` 0 or ``(k - 1) // 2``; even kernels are
    allowed with padding 0 (the strided down-sampling adjoint of
    :func:`conv_transpose3d`).
    """
    _check_rank5(x, "conv3d")
    w = weight.data
    if w.ndim != 5 or not (w.shape[2] == w.shape[3] == w.shape[4]):
        raise ShapeError(f"conv3d: weight must be (c_out, c_in, k, k, k), got {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise ShapeError(f"conv3d: channel axis mismatch, input has {x.shape[1]} channels, weight expects {w.shape[1]}")
    K = w.shape[2]
    if K % 2 == 1:
        if padding not in (0, (K - 1) // 2):
            raise ShapeError(f"conv3d: padding must be 0 or {(K - 1) // 2} for kernel {K}")
    elif padding != 0:
        raise ShapeError("conv3d: even kernels require padding 0")
    if stride < 1:
        raise ShapeError("conv3d: stride must be >= 1")
    for axis, name in zip(range(2, 5), ("depth", "height", "width")):
        if x.shape[axis] + 2 * padding < K:
            raise ShapeError(f"conv3d: {name} axis of size {x.shape[axis]} is smaller than the kernel")
    if bias is not None and bias.shape != (w.shape[0],):
        raise ShapeError(f"conv3d: bias must have shape ({w.shape[0]},), got {bias.shape}")

    p = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p), (p, p))) if p else x.data
    out = kernels.conv3d_forward(xp, w, stride)
    if bias is not None:
        out += bias.data[None, :, None, None, None]

    def _backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            gxp = kernels.conv3d_grad_input(g, w, xp.shape, stride)
            gx = gxp[:, :, p : p + x.shape[2], p : p + x.shape[3], p : p + x.shape[4]] if p else gxp
        if weight.requires_grad:
            gw = kernels.conv3d_grad_weight(xp, g, stride, K)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3, 4))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _record("conv3d", out, parents, _backward)


def conv_transpose3d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 2) -> Tensor:
    """Non-overlapping transposed convolution, weight ``(c_in, c_out, 2, 2, 2)``.

    Each spatial dim doubles; forward equals the data-gradient of
    ``conv3d(., weight, stride=2)``.
    """
    _check_rank5(x, "conv_transpose3d")
    w = weight.data
    if stride != 2 or w.ndim != 5 or w.shape[2:] != (2, 2, 2):
        raise ShapeError("conv_transpose3d: only kernel 2, stride 2 is supported")
    if w.shape[0] != x.shape[1]:
        raise ShapeError(f"conv_transpose3d: channel axis mismatch, input has {x.shape[1]} channels, weight expects {w.shape[0]}")
    n, ci, D, H, W = x.shape
    co = w.shape[1]
    # (n, D, H, W, co, 2, 2, 2) -> (n, co, D, 2, H, 2, W, 2)
    y = np.tensordot(x.data, w, axes=([1], [0]))
    out = y.transpose(0, 4, 1, 5, 2, 6, 3, 7).reshape(n, co, 2 * D, 2 * H, 2 * W)
    if bias is not None:
        out = out + bias.data[None, :, None, None, None]

    def _backward(g):
        g8 = g.reshape(n, co, D, 2, H, 2, W, 2)
        gx = gw = gb = None
        if x.requires_grad:
            gx = np.einsum("nodahbwc,ioabc->nidhw", g8, w, optimize=True)
        if weight.requires_grad:
            gw = np.einsum("nodahbwc,nidhw->ioabc", g8, x.data, optimize=True)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3, 4))
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _record("conv_transpose3d", np.ascontiguousarray(out), parents, _backward)


def maxpool3d(x: Tensor, window: int = 2):
    """2x2x2 max pooling. Returns the pooled tensor and window-local argmax.

    Ties go to the lowest linear index inside the window, which is also the
    lowest global linear index.
    """
    _check_rank5(x, "maxpool3d")
    if window != 2:
        raise ShapeError("maxpool3d: only window 2 is supported")
    n, c, D, H, W = x.shape
    for size, name in zip((D, H, W), ("depth", "height", "width")):
        if size % 2:
            raise ShapeError(f"maxpool3d: {name} axis has odd size {size}; pad the volume to an even size upstream")
    blocks = x.data.reshape(n, c, D // 2, 2, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 6, 3, 5, 7)
    blocks = blocks.reshape(n, c, D // 2, H // 2, W // 2, 8)
    idx = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def _backward(g):
        gb = np.zeros((n, c, D // 2, H // 2, W // 2, 8))
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, c, D // 2, H // 2, W // 2, 2, 2, 2).transpose(0, 1, 2, 5, 3, 6, 4, 7)
        return (gb.reshape(n, c, D, H, W),)

    return _record("maxpool3d", out, (x,), _backward), idx


def batchnorm3d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalisation over ``(n, d, h, w)``.

    In training mode the running buffers are updated in place
    (``running = (1 - momentum) * running + momentum * batch``, unbiased
    variance for the running estimate).
    """
    _check_rank5(x, "batchnorm3d")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,) or running_mean.shape != (c,) or running_var.shape != (c,):
        raise ShapeError(f"batchnorm3d: channel axis mismatch, input has {c} channels")
    axes = (0, 2, 3, 4)
    bc = (None, slice(None), None, None, None)
    if training:
        m = x.data.size // c
        mean = x.data.mean(axis=axes)
        xc = x.data - mean[bc]
        var = (xc * xc).mean(axis=axes)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv[bc]
        unbiased = var * m / max(m - 1, 1)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        inv = 1.0 / np.sqrt(running_var + eps)
        xhat = (x.data - running_mean[bc]) * inv[bc]
    out = gamma.data[bc] * xhat + beta.data[bc]

    def _backward(g):
        gg = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gbeta = g.sum(axis=axes) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gamma.data[bc]
            if training:
                gx = inv[bc] * (
                    gxhat - gxhat.mean(axis=axes)[bc] - xhat * (gxhat * xhat).mean(axis=axes)[bc]
                )
            else:
                gx = gxhat * inv[bc]
        return gx, gg, gbeta

    return _record("batchnorm3d", out, (x, gamma, beta), _backward)


# -------------------------------------------------------------- elementwise


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return _record("sigmoid", s, (x,), lambda g: (g * s * (1.0 - s),))


def _check_broadcast(a, b, op):
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    if len(sa) != len(sb):
        raise ShapeError(f"{op}: rank mismatch {sa} vs {sb}")
    for x, y in zip(sa, sb):
        if x != y and 1 not in (x, y):
            raise ShapeError(f"{op}: shapes {sa} and {sb} do not broadcast")


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; size-1 axes broadcast (channel gates, voxel gates)."""
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")

    def _backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _record("mul", a.data * b.data, (a, b), _backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")

    def _backward(g):
        ga = _unbroadcast(g, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g, b.shape) if b.requires_grad else None
        return ga, gb

    return _record("add", a.data + b.data, (a, b), _backward)


def scale_shift(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """``gamma * x + beta`` with scalar (shape ``(1,)``) parameters."""
    if gamma.shape != (1,) or beta.shape != (1,):
        raise ShapeError("scale_shift: gamma and beta must have shape (1,)")

    def _backward(g):
        return g * gamma.data[0], np.array([np.sum(g * x.data)]), np.array([np.sum(g)])

    return _record("scale_shift", gamma.data[0] * x.data + beta.data[0], (x, gamma, beta), _backward)


# ------------------------------------------------------- reshaping/reductions


def global_avg_pool(x: Tensor) -> Tensor:
    """``(n, c, d, h, w) -> (n, c)`` spatial mean."""
    _check_rank5(x, "global_avg_pool")
    n, c, D, H, W = x.shape
    count = D * H * W

    def _backward(g):
        return (np.broadcast_to(g[:, :, None, None, None] / count, x.shape).copy(),)

    return _record("global_avg_pool", x.data.mean(axis=(2, 3, 4)), (x,), _backward)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from exc
    return _record("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def concat_channels(*tensors: Tensor) -> Tensor:
    if not tensors:
        raise ShapeError("concat_channels: nothing to concatenate")
    base = tensors[0].shape
    for t in tensors:
        if t.data.ndim != len(base) or t.shape[:1] + t.shape[2:] != base[:1] + base[2:]:
            raise ShapeError(f"concat_channels: shape {t.shape} incompatible with {base}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])

    def _backward(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(tensors)))

    return _record("concat_channels", np.concatenate([t.data for t in tensors], axis=1), tensors, _backward)


def split_groups(x: Tensor, groups: int) -> list[Tensor]:
    c = x.shape[1]
    if groups < 1 or c % groups:
        raise ShapeError(f"split_groups: {c} channels are not divisible into {groups} groups")
    size = c // groups
    parts = []
    for gi in range(groups):
        lo, hi = gi * size, (gi + 1) * size

        def _backward(g, lo=lo, hi=hi):
            full = np.zeros(x.shape)
            full[:, lo:hi] = g
            return (full,)

        parts.append(_record("split_groups", x.data[:, lo:hi].copy(), (x,), _backward))
    return parts


def sum_channels(x: Tensor) -> Tensor:
    """Sum over the channel axis, keeping it as size 1."""

    def _backward(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record("sum_channels", x.data.sum(axis=1, keepdims=True), (x,), _backward)


def standardize_spatial(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero mean / unit variance over ``(d, h, w)`` per sample and channel."""
    axes = (2, 3, 4)
    mean = x.data.mean(axis=axes, keepdims=True)
    xc = x.data - mean
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=axes, keepdims=True) + eps)
    y = xc * inv

    def _backward(g):
        return (inv * (g - g.mean(axis=axes, keepdims=True) - y * (g * y).mean(axis=axes, keepdims=True)),)

    return _record("standardize_spatial", y, (x,), _backward)


def dense(z: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``z @ W.T + b`` for ``z`` of shape ``(n, in)``."""
    if z.data.ndim != 2 or weight.data.ndim != 2 or weight.shape[1] != z.shape[1]:
        raise ShapeError(f"dense: cannot apply weight {weight.shape} to input {z.shape}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"dense: bias shape {bias.shape} does not match {weight.shape[0]} outputs")

    def _backward(g):
        return g @ weight.data, g.T @ z.data, g.sum(axis=0)

    return _record("dense", z.data @ weight.data.T + bias.data, (z, weight, bias), _backward)


def total(x: Tensor) -> Tensor:
    """Sum of all elements as a shape-``(1,)`` tensor."""
    return _record("total", np.array([x.data.sum()]), (x,), lambda g: (np.full(x.shape, g[0]),))


# ----------------------------------------------------------- verification


def grad_check(
    primitive: Callable[..., Tensor],
    shapes: Sequence[tuple],
    seed: int = 0,
    step: float = 1e-5,
    floor: float = 1e-6,
) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    Inputs are drawn from a seeded standard normal; the scalar objective is
    ``sum(r * primitive(*inputs))`` with a fixed random ``r``. The relative
    error of each element is ``|a - n| / max(|a|, |n|, floor)``.
    """
    total_elems = sum(int(np.prod(s)) for s in shapes)
    if total_elems > 10_000:
        raise ValueError("grad_check is limited to 1e4 input elements")
    rng = np.random.default_rng(seed)
    inputs = [Tensor(rng.standard_normal(s), requires_grad=True) for s in shapes]
    out = primitive(*inputs)
    r = rng.standard_normal(out.shape)
    backward(total(mul(out, Tensor(r))))

    def objective():
        with no_grad():
            return float(np.sum(primitive(*inputs).data * r))

    worst = 0.0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = objective()
            flat[i] = orig - step
            fm = objective()
            flat[i] = orig
            numeric = (fp - fm) / (2 * step)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    return worst
