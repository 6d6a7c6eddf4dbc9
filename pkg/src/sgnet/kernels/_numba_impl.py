"""numba kernels for 3D convolution and the separable distance transform.

All loops partition work over disjoint output slices and keep a fixed
reduction order per output element, so results do not depend on the
thread count.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def conv3d_forward(xp, w, stride):
    n, ci = xp.shape[0], xp.shape[1]
    co, K = w.shape[0], w.shape[2]
    D = (xp.shape[2] - K) // stride + 1
    H = (xp.shape[3] - K) // stride + 1
    W = (xp.shape[4] - K) // stride + 1
    out = np.empty((n, co, D, H, W))
    for bd in prange(n * D):
        b = bd // D
        d = bd % D
        acc = np.empty((co, W))
        for h in range(H):
            acc[:, :] = 0.0
            for c in range(ci):
                for i in range(K):
                    for j in range(K):
                        xrow = xp[b, c, d * stride + i, h * stride + j]
                        for k in range(K):
                            for o in range(co):
                                wv = w[o, c, i, j, k]
                                if stride == 1:
                                    for x in range(W):
                                        acc[o, x] += wv * xrow[x + k]
                                else:
                                    for x in range(W):
                                        acc[o, x] += wv * xrow[x * stride + k]
            for o in range(co):
                for x in range(W):
                    out[b, o, d, h, x] = acc[o, x]
    return out


@njit(cache=True, parallel=True)
def conv3d_grad_input(g, w, xp_shape, stride):
    n, co, D, H, W = g.shape
    ci, K = w.shape[1], w.shape[2]
    gxp = np.zeros((n, ci, xp_shape[2], xp_shape[3], xp_shape[4]))
    for c in prange(ci):
        for b in range(n):
            for d in range(D):
                for h in range(H):
                    for o in range(co):
                        grow = g[b, o, d, h]
                        for i in range(K):
                            for j in range(K):
                                trow = gxp[b, c, d * stride + i, h * stride + j]
                                for k in range(K):
                                    wv = w[o, c, i, j, k]
                                    if stride == 1:
                                        for x in range(W):
                                            trow[x + k] += wv * grow[x]
                                    else:
                                        for x in range(W):
                                            trow[x * stride + k] += wv * grow[x]
    return gxp


@njit(cache=True, parallel=True)
def conv3d_grad_weight(xp, g, stride, K):
    n, co, D, H, W = g.shape
    ci = xp.shape[1]
    gw = np.empty((co, ci, K, K, K))
    for o in prange(co):
        # per-lane partial sums keep the inner loop vectorisable without
        # reassociating floating-point adds
        lanes = np.zeros((ci, K, K, K, W))
        for b in range(n):
            for d in range(D):
                for h in range(H):
                    grow = g[b, o, d, h]
                    for c in range(ci):
                        for i in range(K):
                            for j in range(K):
                                xrow = xp[b, c, d * stride + i, h * stride + j]
                                for k in range(K):
                                    lane = lanes[c, i, j, k]
                                    if stride == 1:
                                        for x in range(W):
                                            lane[x] += grow[x] * xrow[x + k]
                                    else:
                                        for x in range(W):
                                            lane[x] += grow[x] * xrow[x * stride + k]
        for c in range(ci):
            for i in range(K):
                for j in range(K):
                    for k in range(K):
                        s = 0.0
                        for x in range(W):
                            s += lanes[c, i, j, k, x]
                        gw[o, c, i, j, k] = s
    return gw


@njit(cache=True, parallel=True)
def edt_pass(f, spacing):
    """Lower envelope of parabolas along the last axis of a 2D array.

    ``f`` holds squared distances (``inf`` where no source is known yet);
    returns ``min_p f[p] + (spacing * (q - p))**2`` for every ``q``.
    """
    lines, n = f.shape
    out = np.empty_like(f)
    for line in prange(lines):
        row = f[line]
        v = np.empty(n, dtype=np.int64)
        z = np.empty(n + 1)
        k = -1
        for q in range(n):
            fq = row[q]
            if fq == np.inf:
                continue
            xq = q * spacing
            if k < 0:
                k = 0
                v[0] = q
                z[0] = -np.inf
                z[1] = np.inf
                continue
            while True:
                xv = v[k] * spacing
                s = ((fq + xq * xq) - (row[v[k]] + xv * xv)) / (2.0 * xq - 2.0 * xv)
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        if k < 0:
            for q in range(n):
                out[line, q] = np.inf
            continue
        k = 0
        for q in range(n):
            xq = q * spacing
            while z[k + 1] < xq:
                k += 1
            dx = (q - v[k]) * spacing
            out[line, q] = dx * dx + row[v[k]]
    return out
