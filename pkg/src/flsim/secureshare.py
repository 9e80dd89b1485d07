"""Functional simulation of the two-server private FLGuard round.

Values live in the ring of 64-bit unsigned integers as two's-complement
fixed point.  Each value is split into two additive shares held by party A
and party B.  Additions are local, multiplications use dealer-supplied
Beaver triples followed by local truncation.  Steps that a real deployment
would run inside garbled circuits (square root, division, minimum, median,
the clustering itself) are modelled as joint openings: the coordinator
reconstructs the operands, computes in plaintext and re-shares the result.
Every such opening is written to an audit log.

Nothing here is cryptographically secure; the goal is numerical fidelity.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import binary_search_epsilon, majority_admission
from .defense import RoundOutcome, _noise_seed, add_noise, clip_factor
from .learning import Model
from .linalg import DimensionError, DomainError, median

RING_BITS = 64
LEAK_BITS = 2  # per epsilon-search step: "target cluster found?" and "bounds moved?"
_U64 = np.uint64


class RangeError(DomainError):
    """Value outside the fixed-point representable range."""


class TripleExhaustedError(RuntimeError):
    """The dealer ran out of multiplication triples."""


@dataclass(frozen=True)
class FixedPointCodec:
    frac_bits: int = 16
    ring_bits: int = RING_BITS

    def __post_init__(self):
        if self.ring_bits != RING_BITS:
            raise DomainError("only the 64-bit ring is supported")
        if not 0 < self.frac_bits < self.ring_bits - 1:
            raise DomainError("frac_bits must lie in (0, ring_bits - 1)")

    @property
    def scale(self):
        return float(1 << self.frac_bits)

    @property
    def limit(self):
        """Exclusive bound on ``|x|``."""
        return float(2 ** (self.ring_bits - self.frac_bits - 1))

    def encode(self, x):
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) >= self.limit):
            raise RangeError(f"value outside fixed-point range (|x| < {self.limit:g})")
        return np.rint(x * self.scale).astype(np.int64).view(_U64)

    def decode(self, r):
        return np.asarray(r, dtype=_U64).view(np.int64) / self.scale


def encode(x, codec=FixedPointCodec()):
    return codec.encode(x)


def decode(r, codec=FixedPointCodec()):
    return codec.decode(r)


def random_ring(rng, shape):
    return rng.integers(0, np.iinfo(_U64).max, size=shape, dtype=_U64, endpoint=True)


def share(x, rng):
    """Split ring elements ``x`` into ``(a, b)`` with ``a`` uniform and ``a + b == x`` (mod 2^64)."""
    x = np.asarray(x, dtype=_U64)
    a = random_ring(rng, x.shape)
    return a, x - a


def reconstruct(a, b):
    return np.asarray(a, dtype=_U64) + np.asarray(b, dtype=_U64)


@dataclass
class ShareVec:
    party_a: np.ndarray
    party_b: np.ndarray

    def __post_init__(self):
        self.party_a = np.ascontiguousarray(self.party_a, dtype=_U64)
        self.party_b = np.ascontiguousarray(self.party_b, dtype=_U64)
        if self.party_a.shape != self.party_b.shape:
            raise DimensionError("share vectors of unequal length")

    def __len__(self):
        return self.party_a.shape[0]

    def reveal(self):
        return reconstruct(self.party_a, self.party_b)

    @classmethod
    def from_plain(cls, x, codec, rng):
        return cls(*share(codec.encode(np.atleast_1d(x)), rng))


@dataclass(frozen=True)
class DealerTriple:
    a: ShareVec
    b: ShareVec
    c: ShareVec


class Dealer:
    """Trusted third party handing out Beaver triples ``c = a * b``.

    ``budget`` caps the number of scalar triples; ``consumed`` counts them.
    """

    def __init__(self, seed=0, budget=None):
        self._rng = np.random.default_rng([seed, 0xDEA1])
        self.budget = budget
        self.consumed = 0

    def triples(self, n):
        if self.budget is not None and self.consumed + n > self.budget:
            raise TripleExhaustedError(f"requested {n} triples, {self.budget - self.consumed} left")
        self.consumed += n
        a = random_ring(self._rng, n)
        b = random_ring(self._rng, n)
        c = a * b
        return DealerTriple(
            ShareVec(*share(a, self._rng)), ShareVec(*share(b, self._rng)), ShareVec(*share(c, self._rng))
        )


def shared_add(u, v):
    if len(u) != len(v):
        raise DimensionError("length mismatch")
    return ShareVec(u.party_a + v.party_a, u.party_b + v.party_b)


def shared_sub(u, v):
    if len(u) != len(v):
        raise DimensionError("length mismatch")
    return ShareVec(u.party_a - v.party_a, u.party_b - v.party_b)


def add_public(u, c):
    """Add a public ring vector; only party A adjusts its share."""
    return ShareVec(u.party_a + np.asarray(c, dtype=_U64), u.party_b.copy())


@dataclass
class Party:
    """One computing server.  ``is_a`` decides its role in truncation and public constants."""

    name: str
    is_a: bool

    def mask(self, x, y, t_a, t_b):
        # first message of a Beaver multiplication: (x - a, y - b)
        return x - t_a, y - t_b

    def combine(self, d, e, t_a, t_b, t_c):
        z = t_c + d * t_b + e * t_a
        if self.is_a:
            z = z + d * e
        return z

    def truncate(self, z, f):
        s = np.asarray(z, dtype=_U64).view(np.int64)
        if self.is_a:
            return (s >> f).view(_U64)
        return (-((-s) >> f)).view(_U64)


PARTY_A = Party("A", True)
PARTY_B = Party("B", False)


def _beaver(u, v, dealer):
    n = len(u)
    t = dealer.triples(n)
    # each party sends its masked shares; both learn the opened masks d and e
    da, ea = PARTY_A.mask(u.party_a, v.party_a, t.a.party_a, t.b.party_a)
    db, eb = PARTY_B.mask(u.party_b, v.party_b, t.a.party_b, t.b.party_b)
    d, e = da + db, ea + eb
    za = PARTY_A.combine(d, e, t.a.party_a, t.b.party_a, t.c.party_a)
    zb = PARTY_B.combine(d, e, t.a.party_b, t.b.party_b, t.c.party_b)
    return za, zb


def shared_mul_raw(u, v, dealer):
    """Elementwise product without truncation (exact ring product)."""
    if len(u) != len(v):
        raise DimensionError("length mismatch")
    return ShareVec(*_beaver(u, v, dealer))


def truncate(u, frac_bits):
    return ShareVec(PARTY_A.truncate(u.party_a, frac_bits), PARTY_B.truncate(u.party_b, frac_bits))


def shared_mul(u, v, dealer, codec=FixedPointCodec()):
    """Fixed-point elementwise product: Beaver multiply then per-party truncation."""
    return truncate(shared_mul_raw(u, v, dealer), codec.frac_bits)


def shared_dot(u, v, dealer, codec=FixedPointCodec()):
    """Inner product with a single truncation after the local sum."""
    z = shared_mul_raw(u, v, dealer)
    s = ShareVec(np.array([z.party_a.sum(dtype=_U64)]), np.array([z.party_b.sum(dtype=_U64)]))
    return truncate(s, codec.frac_bits)


class AuditLog:
    """Joint openings and leakage events, one JSON object per line."""

    def __init__(self):
        self.events = []

    def record(self, round_index, stage, opened_bits):
        ev = {"round": int(round_index), "stage": stage, "opened_bits": int(opened_bits)}
        self.events.append(ev)
        return ev

    def to_jsonl(self):
        return "".join(json.dumps(ev, sort_keys=True) + "\n" for ev in self.events)

    def write(self, path):
        Path(path).write_text(self.to_jsonl())


@dataclass
class PrivateContext:
    codec: FixedPointCodec = field(default_factory=FixedPointCodec)
    dealer: Dealer = field(default_factory=Dealer)
    audit: AuditLog = field(default_factory=AuditLog)
    seed: int = 0

    def rng(self, *tags):
        return np.random.default_rng([self.seed, 0x5EC, *tags])


def share_model(model, ctx, tag=0):
    return ShareVec.from_plain(model.params, ctx.codec, ctx.rng(1, tag))


def _joint_open(ctx, round_index, stage, values):
    # models a garbled-circuit step: both shares go in, plaintext comes out
    ctx.audit.record(round_index, stage, values.party_a.size * RING_BITS)
    return ctx.codec.decode(values.reveal())


def _stack(values):
    return ShareVec(np.concatenate([v.party_a for v in values]), np.concatenate([v.party_b for v in values]))


def private_cosine_matrix(shared_models, ctx, round_index=0):
    """Pairwise cosine distances on shared models, re-shared as a flat ``K*K`` ShareVec.

    Dot products and squared norms are computed in the arithmetic domain;
    the division and square roots run in a joint-opening stage.
    """
    K = len(shared_models)
    if K == 0:
        raise DomainError("no shared models")
    p = len(shared_models[0])
    if any(len(m) != p for m in shared_models):
        raise DimensionError("shared models of unequal length")
    iu = [(i, j) for i in range(K) for j in range(i, K)]
    dots = _stack([shared_dot(shared_models[i], shared_models[j], ctx.dealer, ctx.codec) for i, j in iu])
    opened = _joint_open(ctx, round_index, "gc:cosine", dots)
    G = np.zeros((K, K))
    for (i, j), v in zip(iu, opened):
        G[i, j] = G[j, i] = v
    norms = np.sqrt(np.clip(np.diag(G), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        D = 1.0 - G / np.outer(norms, norms)
    zero = norms == 0
    D[zero, :] = 2.0
    D[:, zero] = 2.0
    D = np.clip(D, 0.0, 2.0)
    D = np.triu(D, 1)
    D = D + D.T
    return ShareVec.from_plain(D.ravel(), ctx.codec, ctx.rng(2, round_index))


def decode_matrix(shared, K, ctx):
    D = ctx.codec.decode(shared.reveal()).reshape(K, K)
    # encoding is symmetric elementwise, so the decoded matrix is exactly symmetric
    np.fill_diagonal(D, 0.0)
    return D


def private_flguard_round(G_prev, shared_updates, cfg, ctx, round_index=0):
    """FLGuard with shared distance computations and the DBSCAN approximation.

    The admitted set comes from a binary search over the DBSCAN radius for a
    cluster of exactly ``K // 2 + 1`` models with ``min_pts = K // 2``.
    Party A reconstructs the clipped sum, divides by the admitted count and
    adds the noise in plaintext.
    """
    K = len(shared_updates)
    if K < 3:
        raise DomainError("private_flguard_round needs at least three clients")
    p = G_prev.arch.n_params
    if any(len(s) != p for s in shared_updates):
        raise DimensionError("shared update length does not match the global model")
    codec = ctx.codec
    flags = set()
    events_before = len(ctx.audit.events)

    D = decode_matrix(private_cosine_matrix(shared_updates, ctx, round_index), K, ctx)
    search = binary_search_epsilon(D, K // 2 + 1, max(1, K // 2))
    ctx.audit.record(round_index, "leak:epsilon_search", LEAK_BITS * (search.iterations + 1))
    ctx.audit.record(round_index, "open:cluster_labels", K)
    if search.found:
        admitted = np.flatnonzero(search.labels == search.target_cluster)
    else:
        flags.add("epsilon_search_exhausted")
        admitted, short = majority_admission(search.labels, K)
        if short:
            flags.add("no_majority_cluster")

    g_enc = codec.encode(G_prev.params)
    diffs = [add_public(s, -g_enc) for s in shared_updates]
    sq = _stack([shared_dot(v, v, ctx.dealer, codec) for v in diffs])
    e = np.sqrt(np.clip(_joint_open(ctx, round_index, "gc:sqrt", sq), 0.0, None))
    labels = tuple(search.labels.tolist())
    if admitted.size == 0:
        flags.add("empty_admission")
        return RoundOutcome(G_prev.copy(), (), 0.0, 0.0, frozenset(flags), labels, tuple(e.tolist()),
                            tuple(ctx.audit.events[events_before:]))

    # median, division and minimum: one garbled-circuit stage in the real protocol
    scope = e[admitted] if cfg.median_scope == "admitted" else e
    s_t = median(scope)
    ctx.audit.record(round_index, "gc:median_min", 0)
    factors = np.array([clip_factor(float(e[i]), s_t) for i in admitted])
    f_sh = ShareVec.from_plain(factors, codec, ctx.rng(3, round_index))

    total = None
    for k, i in enumerate(admitted):
        fk = ShareVec(np.full(p, f_sh.party_a[k], dtype=_U64), np.full(p, f_sh.party_b[k], dtype=_U64))
        if cfg.clip_mode == "delta":
            clipped = add_public(shared_mul(diffs[i], fk, ctx.dealer, codec), g_enc)
        else:
            clipped = shared_mul(shared_updates[i], fk, ctx.dealer, codec)
        total = clipped if total is None else shared_add(total, clipped)

    # B sends its shares of the sum to A
    ctx.audit.record(round_index, "open:aggregate", p * RING_BITS)
    G_star = Model(G_prev.arch, codec.decode(total.reveal()) / admitted.size)
    sigma = cfg.lam * s_t
    G = add_noise(G_star, sigma, _noise_seed(cfg.noise_seed, round_index))
    return RoundOutcome(G, tuple(int(i) for i in admitted), s_t, sigma, frozenset(flags), labels,
                        tuple(e.tolist()), tuple(ctx.audit.events[events_before:]))


def expected_triples(K, p, admitted):
    """Triples one private round consumes: K(K+1)/2 dots, K squared distances, ``admitted`` clips."""
    return (K * (K + 1) // 2) * p + K * p + admitted * p


def max_dot_magnitude(codec, p):
    """Largest per-coordinate magnitude for which a length-``p`` dot cannot wrap before truncation."""
    return math.sqrt(2.0 ** (RING_BITS - 1 - 2 * codec.frac_bits) / p)
