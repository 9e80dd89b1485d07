# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: MLP SGD epochs, extended-precision Gram, dense Prim MST."""
import numpy as np

from libc.math cimport exp, log


def gram(const double[:, ::1] X):
    cdef Py_ssize_t K = X.shape[0], p = X.shape[1], i, j, k
    cdef long double acc
    out = np.empty((K, K), dtype=np.longdouble)
    cdef long double[:, ::1] G = out
    with nogil:
        for i in range(K):
            for j in range(i, K):
                acc = 0.0
                for k in range(p):
                    acc = acc + <long double>X[i, k] * <long double>X[j, k]
                G[i, j] = acc
                G[j, i] = acc
    return out


def row_sqdist(const double[:, ::1] X, const double[::1] g):
    cdef Py_ssize_t K = X.shape[0], p = X.shape[1], i, k
    cdef long double acc, d
    out = np.empty(K, dtype=np.longdouble)
    cdef long double[::1] r = out
    with nogil:
        for i in range(K):
            acc = 0.0
            for k in range(p):
                d = <long double>X[i, k] - <long double>g[k]
                acc = acc + d * d
            r[i] = acc
    return out


def sgd_epoch(double[::1] params, const Py_ssize_t[::1] sizes, bint relu,
              const double[:, ::1] X, const Py_ssize_t[::1] y,
              const Py_ssize_t[::1] order, Py_ssize_t batch_size, double lr):
    cdef Py_ssize_t n_layers = sizes.shape[0] - 1
    cdef Py_ssize_t n = order.shape[0]
    cdef Py_ssize_t maxw = 0, l, pos = 0
    for l in range(n_layers + 1):
        if sizes[l] > maxw:
            maxw = sizes[l]
    off_np = np.empty(n_layers, dtype=np.intp)
    cdef Py_ssize_t[::1] off = off_np
    for l in range(n_layers):
        off[l] = pos
        pos += sizes[l] * sizes[l + 1] + sizes[l + 1]

    acts_np = np.zeros((n_layers + 1, batch_size, maxw))
    cdef double[:, :, ::1] acts = acts_np
    d1_np = np.zeros((batch_size, maxw))
    d2_np = np.zeros((batch_size, maxw))
    cdef double[:, ::1] delta = d1_np
    cdef double[:, ::1] dprev = d2_np
    cdef double[:, ::1] tmp
    grad_np = np.zeros(params.shape[0])
    cdef double[::1] grad = grad_np

    cdef Py_ssize_t start, B, r, i, o, fi, fo, ow, ob, last = n_layers - 1
    cdef double acc, m, s, loss, total = 0.0, inv_b
    cdef Py_ssize_t n_batches = 0

    with nogil:
        start = 0
        while start < n:
            B = batch_size
            if start + B > n:
                B = n - start
            inv_b = 1.0 / B
            for r in range(B):
                for i in range(sizes[0]):
                    acts[0, r, i] = X[order[start + r], i]
            # forward
            for l in range(n_layers):
                fi = sizes[l]
                fo = sizes[l + 1]
                ow = off[l]
                ob = ow + fi * fo
                for r in range(B):
                    for o in range(fo):
                        acc = params[ob + o]
                        for i in range(fi):
                            acc = acc + acts[l, r, i] * params[ow + i * fo + o]
                        if l < last and relu and acc < 0.0:
                            acc = 0.0
                        acts[l + 1, r, o] = acc
            # softmax cross-entropy
            fo = sizes[n_layers]
            loss = 0.0
            for r in range(B):
                m = acts[n_layers, r, 0]
                for o in range(1, fo):
                    if acts[n_layers, r, o] > m:
                        m = acts[n_layers, r, o]
                s = 0.0
                for o in range(fo):
                    delta[r, o] = exp(acts[n_layers, r, o] - m)
                    s = s + delta[r, o]
                loss = loss + log(s) + m - acts[n_layers, r, y[order[start + r]]]
                for o in range(fo):
                    delta[r, o] = delta[r, o] / s
                delta[r, y[order[start + r]]] -= 1.0
                for o in range(fo):
                    delta[r, o] = delta[r, o] * inv_b
            total = total + loss * inv_b
            # backward
            l = last
            while l >= 0:
                fi = sizes[l]
                fo = sizes[l + 1]
                ow = off[l]
                ob = ow + fi * fo
                for i in range(fi):
                    for o in range(fo):
                        acc = 0.0
                        for r in range(B):
                            acc = acc + acts[l, r, i] * delta[r, o]
                        grad[ow + i * fo + o] = acc
                for o in range(fo):
                    acc = 0.0
                    for r in range(B):
                        acc = acc + delta[r, o]
                    grad[ob + o] = acc
                if l > 0:
                    for r in range(B):
                        for i in range(fi):
                            if relu and acts[l, r, i] <= 0.0:
                                dprev[r, i] = 0.0
                                continue
                            acc = 0.0
                            for o in range(fo):
                                acc = acc + delta[r, o] * params[ow + i * fo + o]
                            dprev[r, i] = acc
                    tmp = delta
                    delta = dprev
                    dprev = tmp
                l -= 1
            for i in range(params.shape[0]):
                params[i] = params[i] - lr * grad[i]
            n_batches += 1
            start += batch_size
    return total / n_batches


cdef inline bint _edge_less(double w1, Py_ssize_t a1, Py_ssize_t b1,
                            double w2, Py_ssize_t a2, Py_ssize_t b2) noexcept nogil:
    if w1 != w2:
        return w1 < w2
    if a1 != a2:
        return a1 < a2
    return b1 < b2


def mst_prim(const double[:, ::1] M):
    cdef Py_ssize_t n = M.shape[0], k, v, sel, u, su
    in_np = np.zeros(n, dtype=np.uint8)
    bw_np = np.asarray(M[0]).copy()
    bu_np = np.zeros(n, dtype=np.intp)
    edges_np = np.empty((n - 1, 3), dtype=np.float64)
    cdef unsigned char[::1] in_tree = in_np
    cdef double[::1] best_w = bw_np
    cdef Py_ssize_t[::1] best_u = bu_np
    cdef double[:, ::1] edges = edges_np
    in_tree[0] = 1
    with nogil:
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
            edges[k, 0] = min(u, sel)
            edges[k, 1] = max(u, sel)
            edges[k, 2] = best_w[sel]
            in_tree[sel] = 1
            for v in range(n):
                if in_tree[v]:
                    continue
                u = best_u[v]
                if _edge_less(M[sel, v], min(sel, v), max(sel, v),
                              best_w[v], min(u, v), max(u, v)):
                    best_w[v] = M[sel, v]
                    best_u[v] = sel
    return edges_np
