"""Flat parameter-vector arithmetic, model distances and order statistics.

Dot products and sums of squares are accumulated in ``long double`` so that
distances stay accurate for parameter vectors with ~1e5 entries.
"""
import numpy as np

from . import _core


class DimensionError(ValueError):
    """Vectors of different lengths were combined."""


class DomainError(ValueError):
    """Input outside an operation's domain (NaN/Inf, empty input, ...)."""


class DegenerateInputError(ValueError):
    """Cosine distance requested for a zero-norm vector."""


MAX_COSINE_DISTANCE = 2.0


def as_vector(a, name="vector"):
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"{name} contains non-finite entries")
    return v


def as_matrix(models, name="models"):
    """Stack a sequence of parameter vectors (or ``Model`` objects) row-wise."""
    rows = [getattr(m, "params", m) for m in models]
    if not rows:
        raise DomainError(f"{name} is empty")
    lengths = {np.shape(r) for r in rows}
    if len(lengths) != 1:
        raise DimensionError(f"{name} have mismatched lengths: {sorted(lengths)}")
    X = np.ascontiguousarray(np.vstack(rows), dtype=np.float64)
    if not np.all(np.isfinite(X)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(X), axis=1))[0])
        raise DomainError(f"{name}[{bad}] contains non-finite entries")
    return X


def _pair(a, b):
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return a, b


def l2_distance(a, b):
    """Euclidean distance ``sqrt(sum_k (a_k - b_k)^2)``."""
    a, b = _pair(a, b)
    d = a.astype(np.longdouble) - b.astype(np.longdouble)
    return float(np.sqrt(np.dot(d, d)))


def l2_norm(a):
    a = as_vector(a)
    al = a.astype(np.longdouble)
    return float(np.sqrt(np.dot(al, al)))


def cosine_distance(a, b):
    """``1 - a.b / (|a||b|)``, clamped to ``[0, 2]``.

    Raises:
        DegenerateInputError: if either vector has zero norm.
    """
    a, b = _pair(a, b)
    al = a.astype(np.longdouble)
    bl = b.astype(np.longdouble)
    na = np.dot(al, al)
    nb = np.dot(bl, bl)
    if na == 0 or nb == 0:
        raise DegenerateInputError("cosine distance of a zero-norm vector")
    c = 1 - np.dot(al, bl) / np.sqrt(na * nb)
    return float(min(max(c, 0.0), MAX_COSINE_DISTANCE))


def _cosine_from_gram(G, degenerate):
    K = G.shape[0]
    norms = np.diagonal(G).copy()
    zero = norms == 0
    if zero.any() and degenerate == "raise":
        i = int(np.flatnonzero(zero)[0])
        j = 1 if i == 0 else 0
        raise DegenerateInputError(f"cosine distance undefined for pair ({i}, {j}): model {i} has zero norm")
    safe = np.where(zero, 1, norms)
    C = 1 - G / np.sqrt(np.outer(safe, safe))
    C = np.clip(C.astype(np.float64), 0.0, MAX_COSINE_DISTANCE)
    if zero.any():
        C[zero, :] = MAX_COSINE_DISTANCE
        C[:, zero] = MAX_COSINE_DISTANCE
    iu = np.triu_indices(K, 1)
    C.T[iu] = C[iu]
    np.fill_diagonal(C, 0.0)
    return C


def pairwise_cosine(models, degenerate="raise"):
    """Symmetric K x K matrix of pairwise cosine distances.

    Args:
        models: sequence of parameter vectors or ``Model`` objects, K >= 2.
        degenerate: ``"raise"`` to propagate zero-norm errors, ``"max"`` to
            place such models at the maximal distance 2 from everyone else.
    """
    X = as_matrix(models)
    if X.shape[0] < 2:
        raise DomainError("pairwise_cosine needs at least two models")
    return _cosine_from_gram(_core.gram(X), degenerate)


def distances_to(models, reference):
    """Euclidean distance from each model to ``reference``."""
    X = as_matrix(models)
    g = as_vector(getattr(reference, "params", reference), "reference")
    if g.shape[0] != X.shape[1]:
        raise DimensionError(f"length mismatch: {X.shape[1]} vs {g.shape[0]}")
    return np.sqrt(_core.row_sqdist(X, g)).astype(np.float64)


def median(values):
    """Median; mean of the two middle order statistics for even counts."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise DomainError("median of an empty sequence")
    if not np.all(np.isfinite(v)):
        raise DomainError("median input contains non-finite values")
    s = np.sort(v)
    mid = s.size // 2
    if s.size % 2:
        return float(s[mid])
    return float((s[mid - 1] + s[mid]) / 2)


def check_distance_matrix(D):
    """Validate a precomputed distance matrix and return it as float64."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DimensionError(f"distance matrix must be square, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise DomainError("distance matrix contains non-finite entries")
    if not np.array_equal(D, D.T):
        raise DomainError("distance matrix is not symmetric")
    if np.any(np.diagonal(D) != 0):
        raise DomainError("distance matrix has a nonzero diagonal")
    if np.any(D < 0):
        raise DomainError("distance matrix has negative entries")
    return D
