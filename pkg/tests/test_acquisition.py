import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference as ref
from naqbc.acquisition import (
    Pool,
    density_scores,
    mean_pairwise_distance,
    sample_pool,
    select_bald_mcdropout,
    select_coreset,
    select_dendiv_qbc,
    select_div_qbc,
    select_qbc,
    top_k,
)
from naqbc.ensemble import Committee, mc_dropout_variance
from naqbc.exceptions import ConfigurationError
from naqbc.nn import init_model
from naqbc.synthesis import HyperRectangle
from naqbc.utils import make_rng


def pool_of(X, k=1):
    X = np.asarray(X, dtype=float).reshape(len(X), -1)
    return Pool(X, 1, k)


class TestPool:
    def test_size(self):
        p = sample_pool(HyperRectangle.unit(3), 8, 40, 0)
        assert p.candidates.shape == (320, 3) and p.gamma == 8

    def test_gamma_one_is_batch(self):
        assert sample_pool(HyperRectangle.unit(1), 1, 40, 0).size == 40

    def test_seeded(self):
        a = sample_pool(HyperRectangle.unit(2), 4, 5, 9).candidates
        assert np.array_equal(a, sample_pool(HyperRectangle.unit(2), 4, 5, 9).candidates)
        assert np.all(np.abs(a) <= 1)

    @pytest.mark.parametrize("g,k", [(0, 3), (3, 0), (2**31, 2)])
    def test_bad_sizes(self, g, k):
        with pytest.raises(ConfigurationError):
            sample_pool(HyperRectangle.unit(1), g, k, 0)


class TestQbc:
    def test_closed_form_square(self, square_committee):
        idx = select_qbc(square_committee, pool_of([-0.9, 0.1, 0.5]), 2)
        assert sorted(idx.tolist()) == [0, 2]

    def test_whole_pool(self, square_committee):
        idx = select_qbc(square_committee, pool_of([0.3, -0.2, 0.8, 0.0]), 4)
        assert sorted(idx.tolist()) == [0, 1, 2, 3]

    def test_stable_ties(self):
        assert top_k([1.0, 3.0, 3.0, 1.0], 3).tolist() == [1, 2, 0]

    def test_matches_sort_and_slice(self):
        c = Committee([init_model([2, 8, 1], "tanh", s, bias_init="fan_in") for s in range(3)])
        X = make_rng(0).uniform(-1, 1, (50, 2))
        v = c.qbc_variance(X).tolist()
        assert select_qbc(c, pool_of(X), 7).tolist() == ref.qbc_topk(v, 7)

    def test_k_out_of_range(self, square_committee):
        with pytest.raises(ConfigurationError):
            select_qbc(square_committee, pool_of([0.1, 0.2]), 3)


class TestDiversity:
    def test_hand_trace(self, table_committee):
        X = np.array([0.0, 0.1, 0.5, 0.9, 1.0]).reshape(-1, 1)
        c = table_committee(X, [1.0, 0.9, 0.2, 0.0, 0.5])
        # traced by hand: normalised variance then distance to nearest pick
        assert select_div_qbc(c, pool_of(X), 5).tolist() == [0, 4, 2, 1, 3]

    def test_k1_equals_qbc(self):
        c = Committee([init_model([1, 6, 1], "tanh", s, bias_init="fan_in") for s in range(3)])
        X = make_rng(1).uniform(-1, 1, (20, 1))
        assert select_div_qbc(c, pool_of(X), 1).tolist() == select_qbc(c, pool_of(X), 1).tolist()

    def test_equal_variance_spreads(self, table_committee):
        X = np.linspace(-1, 1, 9).reshape(-1, 1)
        c = table_committee(X, np.ones(9))
        idx = select_div_qbc(c, pool_of(X), 3).tolist()
        assert idx == [0, 8, 4]

    def test_density_prefers_cluster(self, table_committee):
        X = np.array([[-0.9], [-0.3], [0.30], [0.31], [0.32], [0.33], [0.9]])
        c = table_committee(X, np.ones(7))
        assert select_dendiv_qbc(c, pool_of(X), 1)[0] in (2, 3, 4, 5)

    def test_density_uses_all_when_small(self):
        X = np.array([[0.0], [1.0], [3.0]])
        assert np.allclose(density_scores(X), [-2.0, -1.5, -2.5])

    def test_uniform_grid_density_near_constant(self, table_committee):
        X = np.linspace(-1, 1, 101).reshape(-1, 1)
        d = density_scores(X)
        interior = d[10:-10]
        assert np.ptp(interior) < 1e-12


def _random_case(rng, n, dim):
    X = rng.uniform(-1, 1, (n, dim))
    v = rng.uniform(0, 1, n)
    if rng.random() < 0.3:
        v = np.round(v, 1)  # provoke ties
    return X, v


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 8), dim=st.integers(1, 3))
def test_greedy_selectors_match_reference(seed, n, dim):
    from conftest import TableCommittee
    rng = make_rng(seed)
    X, v = _random_case(rng, n, dim)
    k = int(rng.integers(1, n + 1))
    c = TableCommittee(X, v)
    pts = X.tolist()
    assert select_qbc(c, pool_of(X), k).tolist() == ref.qbc_topk(v.tolist(), k)
    assert select_div_qbc(c, pool_of(X), k).tolist() == ref.greedy(pts, v.tolist(), k)
    assert select_dendiv_qbc(c, pool_of(X), k).tolist() == ref.greedy(pts, v.tolist(), k, True)
    T = rng.uniform(-1, 1, (int(rng.integers(1, 4)), dim))
    assert select_coreset(T, pool_of(X), k).tolist() == ref.coreset(T.tolist(), pts, k)


class TestCoreset:
    def test_hand_cases(self):
        pool = pool_of([-1.0, -0.5, 0.9])
        assert select_coreset(np.array([[0.0]]), pool, 1).tolist() == [0]
        assert select_coreset(np.array([[0.0]]), pool, 2).tolist() == [0, 2]

    def test_empty_train(self):
        with pytest.raises(ConfigurationError):
            select_coreset(np.zeros((0, 1)), pool_of([0.1]), 1)


class TestBald:
    def test_replayed_scores(self):
        m = init_model([1, 12, 12, 1], seed=2, dropout_rate=0.2)
        X = make_rng(4).uniform(-1, 1, (15, 1))
        idx = select_bald_mcdropout(m, pool_of(X), 4, passes=6, rng=3)
        scores = mc_dropout_variance(m, X, 6, 3)
        assert idx.tolist() == ref.qbc_topk(scores.tolist(), 4)

    def test_tiny_rate_degenerates(self):
        m = init_model([1, 4, 1], seed=0, dropout_rate=1e-12)
        X = np.linspace(-1, 1, 6).reshape(-1, 1)
        assert select_bald_mcdropout(m, pool_of(X), 3, 2, rng=0).tolist() == [0, 1, 2]

    def test_zero_rate_rejected(self):
        with pytest.raises(ConfigurationError):
            select_bald_mcdropout(init_model([1, 4, 1]), pool_of([0.0, 0.5]), 1)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 30), method=st.sampled_from(
    ["qbc", "div", "dendiv", "coreset"]))
def test_selectors_return_distinct_in_range(seed, n, method):
    from conftest import SquareCommittee
    rng = make_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    k = int(rng.integers(1, n + 1))
    c = SquareCommittee()
    idx = {"qbc": lambda: select_qbc(c, pool_of(X), k),
           "div": lambda: select_div_qbc(c, pool_of(X), k),
           "dendiv": lambda: select_dendiv_qbc(c, pool_of(X), k),
           "coreset": lambda: select_coreset(X[:1] * 0, pool_of(X), k)}[method]()
    assert len(idx) == k == len(set(idx.tolist()))
    assert idx.min() >= 0 and idx.max() < n


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_qbc_permutation_invariant(seed):
    from conftest import SquareCommittee
    rng = make_rng(seed)
    X = rng.uniform(-1, 1, (12, 2))
    perm = rng.permutation(12)
    a = X[select_qbc(SquareCommittee(), pool_of(X), 4)]
    b = X[perm][select_qbc(SquareCommittee(), pool_of(X[perm]), 4)]
    assert {tuple(r) for r in a} == {tuple(r) for r in b}


def test_mean_pairwise_distance():
    assert mean_pairwise_distance(np.array([[0.0], [1.0], [3.0]])) == pytest.approx(2.0)
    assert mean_pairwise_distance(np.array([[0.5]])) == 0.0
