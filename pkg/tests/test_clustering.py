import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flsim import clustering as cl
from flsim.clustering import DbscanParams, HdbscanParams, NOISE
from flsim.linalg import DomainError

from oracles import (
    blob_matrix, canonical, dbscan_closure, hdbscan_reference, mst_has_ties, random_distance_matrix,
    tie_free_blob_cases,
)


def _blob_D(groups, spread=0.01, gap=10.0, seed=0):
    rng = np.random.default_rng(seed)
    pts = np.vstack([rng.normal(g * gap, spread, size=(n, 2)) for g, n in enumerate(groups)])
    return np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))


def test_canonical_labels():
    assert cl.canonical_labels([5, 5, -1, 2, 5, 2]).tolist() == [0, 0, -1, 1, 0, 1]


def test_params_validation():
    with pytest.raises(DomainError):
        HdbscanParams(1)
    with pytest.raises(DomainError):
        DbscanParams(-1.0, 2)
    assert HdbscanParams(5).effective_min_samples == 5


def test_ten_identical_plus_outliers():
    pts = np.vstack([np.zeros((10, 2)), [[50, 0], [0, 80], [-90, 5]]])
    D = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    labels = cl.hdbscan(D, HdbscanParams(7))
    assert labels[:10].tolist() == [0] * 10
    assert labels[10:].tolist() == [NOISE] * 3


def test_two_well_separated_blobs():
    D = _blob_D([6, 6], spread=0.1)
    labels = cl.hdbscan(D, HdbscanParams(3, allow_single_cluster=False))
    assert len(set(labels[:6])) == 1 and len(set(labels[6:])) == 1 and labels[0] != labels[6]


def test_mst_prim_total_weight_matches_scipy():
    from scipy.sparse.csgraph import minimum_spanning_tree

    rng = np.random.default_rng(0)
    for _ in range(20):
        D = blob_matrix(int(rng.integers(1000)))
        mine = cl._core.mst_prim(D)[:, 2].sum()
        ref = minimum_spanning_tree(D + 1.0 - np.eye(len(D))).toarray()
        assert mine == pytest.approx(ref[ref > 0].sum() - (len(D) - 1))


@pytest.mark.parametrize("seed", range(200))
def test_dbscan_matches_closure_oracle(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 10))
    D = random_distance_matrix(rng, K)
    eps = float(rng.choice(np.unique(D))) if K > 1 else 0.0
    min_pts = int(rng.integers(1, K + 1))
    assert np.array_equal(cl.dbscan(D, DbscanParams(eps, min_pts)), dbscan_closure(D, eps, min_pts))


def test_dbscan_eps_zero_and_max():
    D = _blob_D([3, 3])
    assert np.all(cl.dbscan(D, DbscanParams(0.0, 2)) == NOISE)
    assert np.all(cl.dbscan(D, DbscanParams(float(D.max()), 2)) == 0)


def _core_partition(labels, D, eps, min_pts):
    core = (D <= eps).sum(axis=1) >= min_pts
    return canonical(np.where(core, labels, NOISE)), core


@settings(max_examples=150, deadline=None)
@given(st.integers(2, 9), st.integers(0, 10_000), st.sampled_from(["square", "sqrt", "affine"]))
def test_dbscan_monotone_and_permutation_invariance(K, seed, kind):
    rng = np.random.default_rng(seed)
    D = random_distance_matrix(rng, K)
    eps = float(rng.choice(np.unique(D)))
    mp = int(rng.integers(1, K + 1))
    f = {"square": np.square, "sqrt": np.sqrt, "affine": lambda x: 2.5 * x}[kind]
    base = cl.dbscan(D, DbscanParams(eps, mp))
    assert np.array_equal(cl.dbscan(f(D), DbscanParams(float(f(eps)), mp)), base)
    perm = rng.permutation(K)
    Dp = D[np.ix_(perm, perm)]
    permuted = cl.dbscan(Dp, DbscanParams(eps, mp))
    # core partition and noise are order-free; an ambiguous border point may switch cluster
    cp, core = _core_partition(base, D, eps, mp)
    cpp, _ = _core_partition(permuted, Dp, eps, mp)
    assert np.array_equal(canonical(cp[perm]), cpp)
    assert np.array_equal(base[perm] == NOISE, permuted == NOISE)


@pytest.mark.parametrize("case", range(50))
def test_hdbscan_matches_reference_on_tie_free_blobs(case):
    D, mcs, ms, single = tie_free_blob_cases(50)[case]
    ours = cl.hdbscan(D, HdbscanParams(mcs, ms, single))
    assert np.array_equal(ours, hdbscan_reference(D, mcs, ms, single))


def test_hdbscan_tie_handling_is_deterministic():
    # tied mutual-reachability weights: our order is lexicographic (w, i, j)
    D = blob_matrix(1091)
    assert mst_has_ties(D, 8)
    a = cl.hdbscan(D, HdbscanParams(2, 8, False))
    assert np.array_equal(a, cl.hdbscan(D.copy(), HdbscanParams(2, 8, False)))


@pytest.mark.parametrize("case", range(50))
def test_hdbscan_scale_and_permutation_invariance(case):
    D, mcs, ms, single = tie_free_blob_cases(50)[case]
    p = HdbscanParams(mcs, ms, single)
    base = cl.hdbscan(D, p)
    assert np.array_equal(cl.hdbscan(3.7 * D, p), base)
    perm = np.random.default_rng(case).permutation(len(D))
    assert np.array_equal(canonical(base[perm]), cl.hdbscan(D[np.ix_(perm, perm)], p))


@pytest.mark.parametrize("case", range(20))
def test_hdbscan_hierarchy_monotone_invariance(case):
    D, mcs, ms, _ = tie_free_blob_cases(20)[case]
    k = mcs if ms is None else ms
    rows = lambda M: np.array(cl.single_linkage(cl._core.mst_prim(cl.mutual_reachability(M, k)), len(M)), dtype=float)
    a, b = rows(D), rows(np.square(D))
    # same merges in the same order; only the heights change
    assert np.array_equal(a[:, [0, 1, 3]], b[:, [0, 1, 3]])
    assert np.allclose(np.square(a[:, 2]), b[:, 2])


def test_hdbscan_nonlinear_transform_can_change_selection():
    # excess-of-mass stabilities are sums of 1/d, so a square transform may
    # select different clusters; the reference implementation agrees with us
    for D, mcs, ms, single in tie_free_blob_cases(200):
        p = HdbscanParams(mcs, ms, single)
        if not np.array_equal(cl.hdbscan(D, p), cl.hdbscan(D ** 2, p)):
            assert np.array_equal(cl.hdbscan(D ** 2, p), hdbscan_reference(D ** 2, mcs, ms, single))
            return
    pytest.fail("expected at least one selection change")


def test_hdbscan_nested_in_dbscan_levels():
    # every HDBSCAN cluster lies inside one connected component of the MST cut at its birth level
    D = _blob_D([5, 4, 3], spread=0.2)
    labels = cl.hdbscan(D, HdbscanParams(3, 2, False))
    coarse = cl.dbscan(D, DbscanParams(1.0, 1))
    for c in set(labels) - {NOISE}:
        assert len(set(coarse[labels == c])) == 1


def test_majority_admission():
    adm, short = cl.majority_admission(np.array([0, 0, 0, 1, 1, -1]), 6)
    assert adm.tolist() == [0, 1, 2] and short
    adm, short = cl.majority_admission(np.array([0, 0, 0, 0, 1, -1]), 6)
    assert not short
    adm, short = cl.majority_admission(np.full(4, NOISE), 4)
    assert adm.size == 0 and short


def test_binary_search_finds_exact_majority():
    D = _blob_D([8, 2], spread=1.0, seed=2)
    s = cl.binary_search_epsilon(D, 6, 5)
    assert s.found and s.leak_bits == 2
    assert np.sum(s.labels == s.target_cluster) == 6


def test_binary_search_exhausted_falls_back():
    # identical points: any positive radius puts all four together
    D = np.zeros((4, 4))
    s = cl.binary_search_epsilon(D, 3, 2, max_iters=5)
    assert not s.found and s.iterations == 5
    assert np.all(s.labels == 0)


def test_kmeans2_splits_and_is_seeded():
    X = np.vstack([np.zeros((5, 3)), np.full((3, 3), 10.0)])
    a = cl.kmeans2(X, 0)
    assert a.tolist() == [0] * 5 + [1] * 3
    rng = np.random.default_rng(0)
    Y = rng.normal(size=(10, 3))
    assert np.array_equal(cl.kmeans2(Y, 4), cl.kmeans2(Y, 4))
    assert set(cl.kmeans2(Y, 4).tolist()) == {0, 1}
