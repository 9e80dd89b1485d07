"""Density-based clustering over precomputed distance matrices.

Labelings are integer arrays: cluster ids are contiguous from 0 and numbered
by their lowest member index; ``NOISE`` (-1) marks unclustered points.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _core
from .linalg import DomainError, check_distance_matrix

NOISE = -1


@dataclass(frozen=True)
class HdbscanParams:
    min_cluster_size: int
    min_samples: int | None = None
    allow_single_cluster: bool = True

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise DomainError("min_cluster_size must be >= 2")
        if self.min_samples is not None and self.min_samples < 1:
            raise DomainError("min_samples must be >= 1")

    @property
    def effective_min_samples(self):
        return self.min_cluster_size if self.min_samples is None else self.min_samples


@dataclass(frozen=True)
class DbscanParams:
    epsilon: float
    min_pts: int

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise DomainError("epsilon must be finite and >= 0")
        if self.min_pts < 1:
            raise DomainError("min_pts must be >= 1")


def canonical_labels(labels):
    """Renumber clusters 0, 1, ... in order of their lowest member index."""
    labels = np.asarray(labels)
    out = np.full(labels.shape, NOISE, dtype=np.intp)
    mapping = {}
    for i, lab in enumerate(labels.tolist()):
        if lab == NOISE:
            continue
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


def cluster_sizes(labels):
    labels = np.asarray(labels)
    ids = labels[labels != NOISE]
    if ids.size == 0:
        return np.zeros(0, dtype=np.intp)
    return np.bincount(ids)


# -- HDBSCAN ---------------------------------------------------------------

def core_distances(D, min_samples):
    """Distance to the ``min_samples``-th nearest point, the point itself included."""
    return np.sort(D, axis=1)[:, min_samples - 1]


def mutual_reachability(D, min_samples):
    core = core_distances(D, min_samples)
    return np.maximum(D, np.maximum.outer(core, core))


def single_linkage(edges, n):
    """Merge MST edges (sorted by weight, then i, j) into a scipy-style hierarchy.

    Returns rows ``(left, right, distance, size)``; row ``k`` creates node ``n + k``.
    """
    order = np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))
    parent = list(range(2 * n - 1))
    size = [1] * n + [0] * (n - 1)

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    rows = []
    for k, e in enumerate(order):
        i, j, w = int(edges[e, 0]), int(edges[e, 1]), float(edges[e, 2])
        a, b = find(i), find(j)
        node = n + k
        parent[a] = parent[b] = node
        size[node] = size[a] + size[b]
        rows.append((a, b, w, size[node]))
    return rows


def _bfs_hierarchy(rows, n, root):
    out = []
    queue = [root]
    while queue:
        out.extend(queue)
        nxt = []
        for node in queue:
            if node >= n:
                left, right = rows[node - n][:2]
                nxt.extend((left, right))
        queue = nxt
    return out


def condense_tree(rows, n, min_cluster_size):
    """Runt-prune the hierarchy into ``(parent, child, lambda, child_size)`` rows."""
    root = 2 * (n - 1)
    relabel = {root: n}
    next_label = n + 1
    ignore = set()
    out = []

    def size_of(node):
        return rows[node - n][3] if node >= n else 1

    def drop_points(parent_label, subtree_root, lam):
        for sub in _bfs_hierarchy(rows, n, subtree_root):
            if sub < n:
                out.append((parent_label, sub, lam, 1))
            ignore.add(sub)

    for node in _bfs_hierarchy(rows, n, root):
        if node in ignore or node < n:
            continue
        left, right, dist, _ = rows[node - n]
        lam = 1.0 / dist if dist > 0 else np.inf
        lc, rc = size_of(left), size_of(right)
        here = relabel[node]
        if lc >= min_cluster_size and rc >= min_cluster_size:
            relabel[left] = next_label
            out.append((here, next_label, lam, lc))
            relabel[right] = next_label + 1
            out.append((here, next_label + 1, lam, rc))
            next_label += 2
        elif lc < min_cluster_size and rc < min_cluster_size:
            drop_points(here, left, lam)
            drop_points(here, right, lam)
        elif lc < min_cluster_size:
            relabel[right] = here
            drop_points(here, left, lam)
        else:
            relabel[left] = here
            drop_points(here, right, lam)
    return out


def stabilities(condensed, n):
    births = {n: 0.0}
    for parent, child, lam, _ in condensed:
        births[child] = lam
    stab = {}
    for parent, child, lam, size in condensed:
        stab[parent] = stab.get(parent, 0.0) + (lam - births[parent]) * size
    stab.setdefault(n, 0.0)
    return stab


def select_eom(condensed, stab, n, allow_single_cluster):
    """Excess-of-mass selection over the condensed cluster tree."""
    nodes = sorted(stab, reverse=True)
    if not allow_single_cluster:
        nodes = [c for c in nodes if c != n]
    children = {}
    for parent, child, _, size in condensed:
        if size > 1:
            children.setdefault(parent, []).append(child)
    stab = dict(stab)
    selected = {c: True for c in nodes}
    for node in nodes:
        kids = children.get(node, [])
        subtree = sum(stab[k] for k in kids)
        if subtree > stab[node]:
            selected[node] = False
            stab[node] = subtree
        else:
            stack = list(kids)
            while stack:
                sub = stack.pop()
                selected[sub] = False
                stack.extend(children.get(sub, []))
    return {c for c, keep in selected.items() if keep}


def label_points(condensed, clusters, n):
    parent_of = {}
    lambda_of = {}
    root_child_max = -np.inf
    for parent, child, lam, _ in condensed:
        parent_of[child] = parent
        if child < n:
            lambda_of[child] = lam
        if parent == n:
            root_child_max = max(root_child_max, lam)
    labels = np.full(n, NOISE, dtype=np.intp)
    for i in range(n):
        node = i
        while node != n and node not in clusters:
            node = parent_of[node]
        if node != n:
            labels[i] = node
        elif n in clusters and len(clusters) == 1 and lambda_of[i] >= root_child_max:
            labels[i] = n
    return canonical_labels(labels)


def hdbscan(D, params):
    """HDBSCAN on a precomputed distance matrix.

    Pipeline: core distances, mutual reachability, minimum spanning tree
    (edge ties broken by ``(i, j)``), single linkage, condensed tree at
    ``min_cluster_size``, excess-of-mass extraction.  With
    ``allow_single_cluster`` the root may be returned as the only cluster;
    then only the points that persist to the root's final split are members.
    """
    D = check_distance_matrix(D)
    n = D.shape[0]
    if n < 2:
        raise DomainError("hdbscan needs at least two points")
    ms = params.effective_min_samples
    if ms > n:
        raise DomainError(f"min_samples={ms} exceeds the number of points {n}")
    M = np.ascontiguousarray(mutual_reachability(D, ms))
    edges = _core.mst_prim(M)
    rows = single_linkage(edges, n)
    condensed = condense_tree(rows, n, params.min_cluster_size)
    stab = stabilities(condensed, n)
    clusters = select_eom(condensed, stab, n, params.allow_single_cluster)
    return label_points(condensed, clusters, n)


# -- DBSCAN ----------------------------------------------------------------

def dbscan(D, params):
    """Classic DBSCAN on a precomputed matrix.

    A point is core when at least ``min_pts`` points (itself included) lie
    within ``epsilon``.  Clusters are connected components of core points plus
    their border points; a border point joins the cluster of the
    lowest-index core point within reach.
    """
    D = check_distance_matrix(D)
    n = D.shape[0]
    near = D <= params.epsilon
    core = near.sum(axis=1) >= params.min_pts
    labels = np.full(n, NOISE, dtype=np.intp)
    cid = 0
    for s in range(n):
        if not core[s] or labels[s] != NOISE:
            continue
        labels[s] = cid
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in np.flatnonzero(near[u] & core):
                if labels[v] == NOISE:
                    labels[v] = cid
                    queue.append(v)
        cid += 1
    for i in np.flatnonzero(~core):
        owners = np.flatnonzero(near[i] & core)
        if owners.size:
            labels[i] = labels[owners[0]]
    return canonical_labels(labels)


@dataclass(frozen=True)
class EpsilonSearch:
    epsilon: float
    labels: np.ndarray
    leak_bits: int
    found: bool
    iterations: int
    target_cluster: int | None = None


def binary_search_epsilon(D, target_size, min_pts, max_iters=32):
    """Bisect epsilon in ``[0, max(D)]`` until some DBSCAN cluster has exactly ``target_size`` members.

    When ``max_iters`` runs out, the evaluated labeling whose largest cluster
    is closest to ``target_size`` from above is returned (falling back to
    ``epsilon = max(D)``).  ``leak_bits`` is the fixed two-bit disclosure of
    the private protocol: whether a cluster had the target size and whether
    the bounds moved.
    """
    D = check_distance_matrix(D)
    n = D.shape[0]
    if not 1 <= target_size <= n:
        raise DomainError(f"target_size must lie in [1, {n}]")
    lo, hi = 0.0, float(D.max())
    if target_size == n:
        labels = dbscan(D, DbscanParams(hi, min_pts))
        hit = _target_cluster(labels, target_size)
        return EpsilonSearch(hi, labels, 2, hit is not None, 0, hit)
    tried = []
    eps = (lo + hi) / 2
    for it in range(max_iters + 1):
        labels = dbscan(D, DbscanParams(eps, min_pts))
        hit = _target_cluster(labels, target_size)
        if hit is not None:
            return EpsilonSearch(eps, labels, 2, True, it, hit)
        sizes = cluster_sizes(labels)
        largest = int(sizes.max()) if sizes.size else 0
        tried.append((eps, labels, largest))
        if it == max_iters:
            break
        if largest > target_size:
            hi = eps
        else:
            lo = eps
        eps = (lo + hi) / 2
    above = [t for t in tried if t[2] >= target_size]
    if above:
        eps, labels, _ = min(above, key=lambda t: t[2])
    else:
        eps = float(D.max())
        labels = dbscan(D, DbscanParams(eps, min_pts))
    return EpsilonSearch(eps, labels, 2, False, len(tried) - 1, None)


def _target_cluster(labels, size):
    hits = np.flatnonzero(cluster_sizes(labels) == size)
    return int(hits[0]) if hits.size else None


# -- K-means ---------------------------------------------------------------

def kmeans2(models, seed, max_iter=100):
    """Lloyd's algorithm with k=2 and seeded farthest-point initialisation."""
    X = np.vstack([np.asarray(getattr(m, "params", m), dtype=np.float64) for m in models])
    n = X.shape[0]
    if n < 2:
        raise DomainError("kmeans2 needs at least two points")
    rng = np.random.default_rng([seed, 0x2C])
    first = int(rng.integers(n))
    d0 = np.sum((X - X[first]) ** 2, axis=1)
    second = int(np.argmax(d0))
    if second == first:
        second = (first + 1) % n
    centers = X[[first, second]].copy()
    assign = None
    for _ in range(max_iter):
        dist = np.stack([np.sum((X - c) ** 2, axis=1) for c in centers], axis=1)
        new = np.argmin(dist, axis=1)
        for k in (0, 1):
            if not np.any(new == k):
                other = new == 1 - k
                cand = np.flatnonzero(other)
                far = cand[np.argmax(dist[cand, 1 - k])]
                new[far] = k
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        centers = np.stack([X[assign == k].mean(axis=0) for k in (0, 1)])
    return canonical_labels(assign)


# -- admission -------------------------------------------------------------

def majority_admission(labels, K):
    """Members of the largest cluster and whether the majority rule was violated.

    The largest cluster (lowest id on ties) is admitted; the flag is set when
    it has fewer than ``K // 2 + 1`` members.  All-noise admits nobody.
    """
    labels = np.asarray(labels)
    sizes = cluster_sizes(labels)
    if sizes.size == 0:
        return np.zeros(0, dtype=np.intp), True
    best = int(np.argmax(sizes))
    admitted = np.flatnonzero(labels == best).astype(np.intp)
    return admitted, bool(sizes[best] < K // 2 + 1)
