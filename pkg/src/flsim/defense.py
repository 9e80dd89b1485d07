"""Aggregation rules: FLGuard and the baselines it is compared against.

Every round function takes the previous global model and the client models
of this round and returns an immutable :class:`RoundOutcome`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import HdbscanParams, binary_search_epsilon, hdbscan, kmeans2, majority_admission
from .learning import Model
from .linalg import DimensionError, DomainError, as_matrix, distances_to, median, pairwise_cosine

CLIP_MODES = ("delta", "literal")
MEDIAN_SCOPES = ("admitted", "all")
CLUSTERERS = ("hdbscan", "dbscan")


@dataclass(frozen=True)
class DefenseConfig:
    """FLGuard knobs.

    ``filtering`` and ``smoothing`` switch the two layers independently
    (clustering-based admission; clipping plus noise) for ablations.
    ``min_cluster_size=None`` means ``K // 2 + 1``; ``min_samples=None``
    ties it to the minimum cluster size.
    """

    lam: float = 0.001
    clip_mode: str = "delta"
    median_scope: str = "admitted"
    min_cluster_size: int | None = None
    min_samples: int | None = None
    clusterer: str = "hdbscan"
    filtering: bool = True
    smoothing: bool = True
    noise_seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise DomainError("defense.lam must be >= 0")
        if self.clip_mode not in CLIP_MODES:
            raise DomainError(f"defense.clip_mode must be one of {CLIP_MODES}")
        if self.median_scope not in MEDIAN_SCOPES:
            raise DomainError(f"defense.median_scope must be one of {MEDIAN_SCOPES}")
        if self.clusterer not in CLUSTERERS:
            raise DomainError(f"defense.clusterer must be one of {CLUSTERERS}")

    def hdbscan_params(self, K):
        mcs = self.min_cluster_size or K // 2 + 1
        return HdbscanParams(mcs, self.min_samples)


@dataclass(frozen=True)
class RoundOutcome:
    global_model: Model
    admitted: tuple
    s_t: float
    sigma: float
    flags: frozenset = frozenset()
    labels: tuple = ()
    distances: tuple = ()
    audit: tuple = field(default=(), compare=False)


def _check_updates(updates, reference=None):
    if not updates:
        raise DomainError("no client updates")
    arch = updates[0].arch
    if any(u.arch != arch for u in updates) or (reference is not None and reference.arch != arch):
        raise DimensionError("architecture mismatch among models")
    return arch


def fedavg(updates):
    """Unweighted parameter mean."""
    arch = _check_updates(updates)
    X = as_matrix(updates)
    return Model(arch, X.mean(axis=0))


def euclid_to_global(G_prev, updates):
    _check_updates(updates, G_prev)
    return distances_to(updates, G_prev)


def clip_factor(e, S):
    return 1.0 if e == 0 or e <= S else S / e


def clip_update(W, G_prev, S, mode="delta", e=None):
    """Scale ``W`` so it lies within ``S`` of ``G_prev`` (delta) or by ``min(1, S/e)`` (literal)."""
    if S < 0:
        raise DomainError("clipping bound must be >= 0")
    if mode not in CLIP_MODES:
        raise DomainError(f"unknown clip mode {mode!r}")
    if W.arch != G_prev.arch:
        raise DimensionError("architecture mismatch")
    if e is None:
        e = float(distances_to([W], G_prev)[0])
    f = clip_factor(e, S)
    if f == 1.0:
        return W.copy()
    if mode == "delta":
        return W.with_params(G_prev.params + f * (W.params - G_prev.params))
    return W.with_params(f * W.params)


def add_noise(G_star, sigma, seed):
    """Add i.i.d. N(0, sigma^2) noise to every parameter (seeded)."""
    if sigma < 0:
        raise DomainError("sigma must be >= 0")
    if sigma == 0:
        return G_star.copy()
    rng = np.random.default_rng([seed, 0x7015E])
    return G_star.with_params(G_star.params + rng.normal(0.0, sigma, size=G_star.params.shape))


def admit(updates, cfg):
    """Filtering layer: cosine distances, clustering, majority admission.

    Returns ``(admitted, labels, flags)``.
    """
    K = len(updates)
    D = pairwise_cosine(updates, degenerate="max")
    flags = set()
    if cfg.clusterer == "hdbscan":
        labels = hdbscan(D, cfg.hdbscan_params(K))
        admitted, short = majority_admission(labels, K)
    else:
        search = binary_search_epsilon(D, K // 2 + 1, max(1, K // 2))
        labels = search.labels
        if search.found:
            admitted = np.flatnonzero(labels == search.target_cluster).astype(np.intp)
            short = False
        else:
            admitted, short = majority_admission(labels, K)
            flags.add("epsilon_search_exhausted")
    if short:
        flags.add("no_majority_cluster")
    return admitted, labels, flags


def aggregate_clipped(G_prev, updates, admitted, e, S, mode):
    clipped = [clip_update(updates[i], G_prev, S, mode, e=float(e[i])) for i in admitted]
    return fedavg(clipped)


def flguard_round(G_prev, updates, cfg, round_index=0):
    """One FLGuard aggregation.

    Filtering: cosine distances between the client models, HDBSCAN with a
    minimum cluster size of ``K // 2 + 1``, admit the majority cluster.
    Smoothing: clip admitted models to the median distance ``S_t`` from
    ``G_prev``, average, add Gaussian noise with ``sigma = lam * S_t``.
    """
    K = len(updates)
    if K < 3:
        raise DomainError("flguard_round needs at least three clients")
    _check_updates(updates, G_prev)
    flags = set()
    if cfg.filtering:
        admitted, labels, flags = admit(updates, cfg)
    else:
        admitted, labels = np.arange(K, dtype=np.intp), np.zeros(K, dtype=np.intp)
    e = euclid_to_global(G_prev, updates)
    if admitted.size == 0:
        flags.add("empty_admission")
        return RoundOutcome(G_prev.copy(), (), 0.0, 0.0, frozenset(flags), tuple(labels.tolist()), tuple(e.tolist()))
    if not cfg.smoothing:
        G = fedavg([updates[i] for i in admitted])
        return RoundOutcome(G, tuple(admitted.tolist()), 0.0, 0.0, frozenset(flags), tuple(labels.tolist()), tuple(e.tolist()))
    scope = e[admitted] if cfg.median_scope == "admitted" else e
    s_t = median(scope)
    G_star = aggregate_clipped(G_prev, updates, admitted, e, s_t, cfg.clip_mode)
    sigma = cfg.lam * s_t
    G = add_noise(G_star, sigma, _noise_seed(cfg.noise_seed, round_index))
    return RoundOutcome(G, tuple(admitted.tolist()), s_t, sigma, frozenset(flags), tuple(labels.tolist()), tuple(e.tolist()))


def _noise_seed(seed, round_index):
    return int(np.random.SeedSequence([seed, round_index]).generate_state(1)[0])


def static_dp_round(G_prev, updates, S_fixed=1.0, sigma_fixed=0.01, seed=0, round_index=0):
    """Clip every model to a fixed bound, average, add fixed noise."""
    _check_updates(updates, G_prev)
    e = euclid_to_global(G_prev, updates)
    admitted = np.arange(len(updates), dtype=np.intp)
    G_star = aggregate_clipped(G_prev, updates, admitted, e, S_fixed, "delta")
    G = add_noise(G_star, sigma_fixed, _noise_seed(seed, round_index))
    return RoundOutcome(G, tuple(admitted.tolist()), float(S_fixed), float(sigma_fixed), frozenset(), (), tuple(e.tolist()))


def kmeans_filter_round(G_prev, updates, S_fixed=1.0, sigma_fixed=0.01, seed=0, round_index=0):
    """Two-means filtering (smaller cluster dropped, lower id kept on ties) then static clip and noise."""
    _check_updates(updates, G_prev)
    labels = kmeans2(updates, _noise_seed(seed, round_index))
    sizes = np.bincount(labels, minlength=2)
    keep = 0 if sizes[0] >= sizes[1] else 1
    admitted = np.flatnonzero(labels == keep).astype(np.intp)
    e = euclid_to_global(G_prev, updates)
    G_star = aggregate_clipped(G_prev, updates, admitted, e, S_fixed, "delta")
    G = add_noise(G_star, sigma_fixed, _noise_seed(seed, round_index))
    return RoundOutcome(G, tuple(admitted.tolist()), float(S_fixed), float(sigma_fixed), frozenset(), tuple(labels.tolist()), tuple(e.tolist()))


def krum_scores(updates, f):
    X = as_matrix(updates)
    K = X.shape[0]
    m = K - f - 2
    if m < 1:
        raise DomainError(f"krum needs K - f - 2 >= 1 (K={K}, f={f})")
    sq = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=-1)
    scores = np.empty(K)
    for i in range(K):
        others = np.delete(sq[i], i)
        scores[i] = np.sum(np.sort(others)[:m])
    return scores


def krum_round(G_prev, updates, f):
    """Select the single model with the smallest sum of squared distances to its K-f-2 nearest neighbours."""
    _check_updates(updates, G_prev)
    scores = krum_scores(updates, f)
    best = int(np.argmin(scores))
    e = euclid_to_global(G_prev, updates)
    return RoundOutcome(updates[best].copy(), (best,), 0.0, 0.0, frozenset({"krum"}), (), tuple(e.tolist()))


def fedavg_round(G_prev, updates):
    _check_updates(updates, G_prev)
    e = euclid_to_global(G_prev, updates)
    return RoundOutcome(fedavg(updates), tuple(range(len(updates))), 0.0, 0.0, frozenset(), (), tuple(e.tolist()))
