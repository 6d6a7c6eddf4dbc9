"""Pure-numpy fallbacks with the same signatures as the numba kernels.

Convolutions loop over kernel offsets and hand each offset to a batched
matmul; the distance pass is a brute-force min-plus product per line.
"""

import numpy as np


def _window(xp, i, j, k, out_dims, stride):
    D, H, W = out_dims
    return xp[
        :,
        :,
        i : i + stride * (D - 1) + 1 : stride,
        j : j + stride * (H - 1) + 1 : stride,
        k : k + stride * (W - 1) + 1 : stride,
    ]


def _out_dims(padded, K, stride):
    return tuple((s - K) // stride + 1 for s in padded)


def conv3d_forward(xp, w, stride):
    n, ci = xp.shape[:2]
    co, K = w.shape[0], w.shape[2]
    dims = _out_dims(xp.shape[2:], K, stride)
    out = np.zeros((n, co, int(np.prod(dims))))
    for i in range(K):
        for j in range(K):
            for k in range(K):
                cols = _window(xp, i, j, k, dims, stride).reshape(n, ci, -1)
                out += np.matmul(w[:, :, i, j, k], cols)
    return out.reshape((n, co) + dims)


def conv3d_grad_input(g, w, xp_shape, stride):
    n, co = g.shape[:2]
    ci, K = w.shape[1], w.shape[2]
    dims = g.shape[2:]
    gxp = np.zeros((n, ci) + tuple(xp_shape[2:]))
    gflat = g.reshape(n, co, -1)
    for i in range(K):
        for j in range(K):
            for k in range(K):
                contrib = np.matmul(w[:, :, i, j, k].T, gflat).reshape((n, ci) + dims)
                _window(gxp, i, j, k, dims, stride)[...] += contrib
    return gxp


def conv3d_grad_weight(xp, g, stride, K):
    n, co = g.shape[:2]
    ci = xp.shape[1]
    dims = g.shape[2:]
    gw = np.empty((co, ci, K, K, K))
    gflat = g.reshape(n, co, -1)
    for i in range(K):
        for j in range(K):
            for k in range(K):
                cols = _window(xp, i, j, k, dims, stride).reshape(n, ci, -1)
                gw[:, :, i, j, k] = np.tensordot(gflat, cols, axes=([0, 2], [0, 2]))
    return gw


def edt_pass(f, spacing, chunk_elems=1 << 22):
    lines, n = f.shape
    q = np.arange(n)
    offsets = ((q[:, None] - q[None, :]) * spacing) ** 2
    out = np.empty_like(f)
    step = max(1, chunk_elems // max(1, n * n))
    for start in range(0, lines, step):
        block = f[start : start + step]
        out[start : start + step] = np.min(block[:, None, :] + offsets[None, :, :], axis=2)
    return out
