import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flsim import linalg
from flsim.linalg import DegenerateInputError, DimensionError, DomainError

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_l2_distance_basics():
    assert linalg.l2_distance([0, 0], [3, 4]) == 5.0
    assert linalg.l2_distance([1.5, -2], [1.5, -2]) == 0.0
    assert linalg.l2_norm([3, 4, 0]) == 5.0


def test_l2_distance_matches_math_hypot():
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.normal(size=7), rng.normal(size=7)
        assert linalg.l2_distance(a, b) == pytest.approx(math.dist(a, b), rel=1e-14)


def test_length_mismatch_and_nonfinite():
    with pytest.raises(DimensionError):
        linalg.l2_distance([1, 2], [1, 2, 3])
    with pytest.raises(DomainError):
        linalg.l2_distance([np.nan, 1], [1, 1])
    with pytest.raises(DimensionError):
        linalg.as_matrix([[1, 2], [1, 2, 3]])


def test_long_vector_accuracy():
    # 1e5 entries of 0.1: float64 naive summation drifts, long double should not
    a = np.full(100_000, 0.1)
    assert linalg.l2_norm(a) == pytest.approx(math.sqrt(100_000 * 0.01), rel=1e-13)


def test_cosine_distance_examples():
    assert linalg.cosine_distance([1, 0], [0, 1]) == pytest.approx(1.0)
    assert linalg.cosine_distance([1, 2], [2, 4]) == pytest.approx(0.0, abs=1e-15)
    assert linalg.cosine_distance([1, 2], [-1, -2]) == pytest.approx(2.0)
    with pytest.raises(DegenerateInputError):
        linalg.cosine_distance([0, 0], [1, 0])


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 6, elements=finite), arrays(np.float64, 6, elements=finite))
def test_cosine_range_and_symmetry(a, b):
    if not (np.any(a) and np.any(b)):
        return
    d = linalg.cosine_distance(a, b)
    assert 0.0 <= d <= 2.0
    assert d == linalg.cosine_distance(b, a)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, 5, elements=finite), st.floats(0.01, 100))
def test_cosine_scale_invariance(a, c):
    if np.linalg.norm(a) < 1e-3:
        return
    b = np.roll(a, 1) + 1.0
    assert linalg.cosine_distance(c * a, b) == pytest.approx(linalg.cosine_distance(a, b), abs=1e-12)


def test_pairwise_cosine_properties():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(6, 9))
    D = linalg.pairwise_cosine(X)
    assert np.array_equal(D, D.T)
    assert np.all(np.diagonal(D) == 0)
    for i in range(6):
        for j in range(6):
            if i != j:
                assert D[i, j] == pytest.approx(linalg.cosine_distance(X[i], X[j]), abs=1e-12)
    linalg.check_distance_matrix(D)


def test_pairwise_cosine_degenerate_modes():
    X = np.array([[1.0, 0], [0, 0], [0, 1.0]])
    with pytest.raises(DegenerateInputError, match=r"pair \(1, 0\)"):
        linalg.pairwise_cosine(X)
    D = linalg.pairwise_cosine(X, degenerate="max")
    assert D[1, 0] == D[1, 2] == 2.0 and D[1, 1] == 0.0


def test_positive_scaling_leaves_cosine_matrix_unchanged():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(5, 8))
    D = linalg.pairwise_cosine(X)
    X2 = X.copy()
    X2[2] *= 50.0
    assert np.allclose(linalg.pairwise_cosine(X2), D, atol=1e-12)


def test_distances_to():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(6, 4))
    g = rng.normal(size=4)
    e = linalg.distances_to(X, g)
    assert np.allclose(e, [linalg.l2_distance(x, g) for x in X], rtol=1e-14)
    assert linalg.distances_to([g], g)[0] == 0.0


def test_median():
    assert linalg.median([3, 1, 2]) == 2
    assert linalg.median([4, 1, 3, 2]) == 2.5
    with pytest.raises(DomainError):
        linalg.median([])
    with pytest.raises(DomainError):
        linalg.median([1, np.nan])


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=1, max_size=30))
def test_median_matches_numpy(v):
    assert linalg.median(v) == pytest.approx(float(np.median(v)), abs=1e-9)


def test_check_distance_matrix_rejects():
    with pytest.raises(DimensionError):
        linalg.check_distance_matrix(np.zeros((2, 3)))
    with pytest.raises(DomainError):
        linalg.check_distance_matrix(np.array([[0, 1], [2, 0.0]]))
    with pytest.raises(DomainError):
        linalg.check_distance_matrix(np.array([[1, 1], [1, 0.0]]))
    with pytest.raises(DomainError):
        linalg.check_distance_matrix(np.array([[0, -1], [-1, 0.0]]))
