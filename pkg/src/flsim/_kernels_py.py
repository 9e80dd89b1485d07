"""Pure numpy implementations of the hot kernels.

These mirror ``_kernels.pyx`` one for one and are used whenever the compiled
extension is unavailable (or ``FLSIM_PURE=1`` is set).
"""
import numpy as np


def gram(X):
    """Gram matrix of the rows of ``X`` accumulated in extended precision."""
    Xl = np.asarray(X, dtype=np.longdouble)
    return Xl @ Xl.T


def row_sqdist(X, g):
    """Squared Euclidean distance from every row of ``X`` to ``g`` (long double)."""
    diff = np.asarray(X, dtype=np.longdouble) - np.asarray(g, dtype=np.longdouble)
    return np.einsum("ij,ij->i", diff, diff)


def _layout(sizes):
    offsets = []
    pos = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        offsets.append((pos, pos + fan_in * fan_out, fan_in, fan_out))
        pos += fan_in * fan_out + fan_out
    return offsets


def batch_grad(params, sizes, relu, Xb, yb):
    """Mean softmax cross-entropy over a batch and its gradient w.r.t. ``params``."""
    layout = _layout(sizes)
    acts = [Xb]
    h = Xb
    last = len(layout) - 1
    for li, (ow, ob, fi, fo) in enumerate(layout):
        W = params[ow:ob].reshape(fi, fo)
        b = params[ob:ob + fo]
        h = h @ W + b
        if li < last and relu:
            h = np.maximum(h, 0.0)
        acts.append(h)
    logits = acts[-1]
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    s = e.sum(axis=1, keepdims=True)
    B = Xb.shape[0]
    rows = np.arange(B)
    losses = np.log(s[:, 0]) + m[:, 0] - logits[rows, yb]
    delta = e / s
    delta[rows, yb] -= 1.0
    delta /= B
    grad = np.empty_like(params)
    for li in range(last, -1, -1):
        ow, ob, fi, fo = layout[li]
        a = acts[li]
        grad[ow:ob] = (a.T @ delta).ravel()
        grad[ob:ob + fo] = delta.sum(axis=0)
        if li > 0:
            W = params[ow:ob].reshape(fi, fo)
            delta = delta @ W.T
            if relu:
                delta = delta * (a > 0.0)
    return float(losses.mean()), grad


def sgd_epoch(params, sizes, relu, X, y, order, batch_size, lr):
    """One epoch of mini-batch SGD in place on ``params``; returns the mean batch loss."""
    n = order.shape[0]
    total = 0.0
    n_batches = 0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        loss, grad = batch_grad(params, sizes, relu, X[idx], y[idx])
        params -= lr * grad
        total += loss
        n_batches += 1
    return total / n_batches


def _edge_less(w1, a1, b1, w2, a2, b2):
    if w1 != w2:
        return w1 < w2
    if a1 != a2:
        return a1 < a2
    return b1 < b2


def mst_prim(M):
    """Minimum spanning tree of a dense symmetric matrix.

    Edges are totally ordered by ``(weight, i, j)`` with ``i < j``, which makes
    the tree unique.  Returns an ``(n - 1, 3)`` array of ``(i, j, weight)``.
    """
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best_w = M[0].copy()
    best_u = np.zeros(n, dtype=np.intp)
    edges = np.empty((n - 1, 3), dtype=np.float64)
    for k in range(n - 1):
        sel = -1
        for v in range(n):
            if in_tree[v]:
                continue
            if sel < 0:
                sel = v
                continue
            u = best_u[v]
            su = best_u[sel]
            if _edge_less(best_w[v], min(u, v), max(u, v),
                          best_w[sel], min(su, sel), max(su, sel)):
                sel = v
        u = best_u[sel]
        edges[k] = (min(u, sel), max(u, sel), best_w[sel])
        in_tree[sel] = True
        for v in range(n):
            if in_tree[v]:
                continue
            u = best_u[v]
            if _edge_less(M[sel, v], min(sel, v), max(sel, v),
                          best_w[v], min(u, v), max(u, v)):
                best_w[v] = M[sel, v]
                best_u[v] = sel
    return edges
