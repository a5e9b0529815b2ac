import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from naqbc.ensemble import (
    Committee,
    DropoutMLPRegressor,
    ModelSpec,
    QBCCommitteeRegressor,
    mc_dropout_variance,
    train_committee,
)
from naqbc.exceptions import ConfigurationError
from naqbc.nn import MlpModel, TrainConfig, forward, init_model, sample_dropout_masks
from naqbc.utils import make_rng


def linear_member(slope, intercept=0.0):
    return MlpModel((1, 1, 1), [np.array([[1.0]]), np.array([[slope]])],
                    [np.array([5.0]), np.array([intercept - 5.0 * slope])], "relu")


def const_member(values):
    values = np.atleast_1d(np.asarray(values, dtype=float))
    d = values.size
    return MlpModel((1, 1, d), [np.zeros((1, 1)), np.zeros((1, d))],
                    [np.zeros(1), values], "relu")


def random_committee(seed, n=4, widths=(3, 6, 6, 2), act="tanh"):
    return Committee([init_model(widths, act, seed * 100 + i, bias_init="fan_in") for i in range(n)])


def two_pass_variance(c, x):
    outs = [forward(m, x) for m in c.members]
    mu = sum(outs) / len(outs)
    return float(np.mean(sum((o - mu) ** 2 for o in outs) / len(outs)))


class TestCommittee:
    def test_needs_two_members(self):
        with pytest.raises(ConfigurationError):
            Committee([init_model([1, 2, 1])])

    def test_shared_architecture(self):
        with pytest.raises(ConfigurationError):
            Committee([init_model([1, 2, 1]), init_model([1, 3, 1])])

    def test_mean_of_zero_and_two(self):
        c = Committee([const_member(0.0), const_member(2.0)])
        assert c.mean_prediction(np.array([0.3]))[0] == pytest.approx(1.0)
        assert c.qbc_variance(np.array([0.3])) == pytest.approx(1.0)

    def test_multi_output_average(self):
        c = Committee([const_member([0.0, 0.0]), const_member([2.0, 4.0])])
        assert c.qbc_variance(np.array([0.1])) == pytest.approx(2.5)

    def test_identical_members_zero(self):
        m = init_model([2, 5, 1], seed=3)
        c = Committee([m, m, m])
        X = make_rng(0).uniform(-1, 1, (10, 2))
        assert np.all(c.qbc_variance(X) == 0)
        assert np.all(c.qbc_variance_gradient(X) == 0)

    def test_mean_matches_summation(self):
        c = random_committee(1)
        x = np.array([0.2, -0.7, 0.4])
        brute = sum(forward(m, x) for m in c.members) / len(c)
        assert np.allclose(c.mean_prediction(x), brute, atol=1e-12, rtol=0)

    def test_streaming_equals_two_pass(self):
        c = random_committee(2, n=7)
        X = make_rng(5).uniform(-1, 1, (1000, 3))
        v = c.qbc_variance(X)
        naive = np.array([two_pass_variance(c, x) for x in X[:50]])
        assert np.abs(v[:50] - naive).max() <= 1e-12
        P = c.member_predictions(X)
        assert np.abs(v - P.var(axis=0).mean(axis=1)).max() <= 1e-12

    def test_symmetric_closed_form(self):
        c = Committee([linear_member(1.0), linear_member(-1.0)])
        x = np.array([0.3])
        assert c.qbc_variance(x) == pytest.approx(0.09)
        assert c.qbc_variance_gradient(x)[0] == pytest.approx(0.6)

    @pytest.mark.parametrize("seed", range(6))
    def test_gradient_finite_differences(self, seed):
        c = random_committee(seed)
        x = make_rng(seed, "x").uniform(-1, 1, 3)
        h = 1e-4
        fd = np.array([(c.qbc_variance(x + h * e) - c.qbc_variance(x - h * e)) / (2 * h)
                       for e in np.eye(3)])
        assert np.allclose(c.qbc_variance_gradient(x), fd, rtol=1e-4, atol=1e-10)

    def test_batch_gradient_matches_rows(self):
        c = random_committee(3)
        X = make_rng(0).uniform(-1, 1, (4, 3))
        G = c.qbc_variance_gradient(X)
        for i in range(4):
            assert np.allclose(G[i], c.qbc_variance_gradient(X[i]), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), perm_seed=st.integers(0, 10_000))
def test_variance_nonnegative_and_permutation_invariant(seed, perm_seed):
    c = random_committee(seed, n=5)
    order = make_rng(perm_seed).permutation(5)
    shuffled = Committee([c.members[i] for i in order])
    X = make_rng(seed, "probe").uniform(-1, 1, (20, 3))
    v = c.qbc_variance(X)
    assert np.all(v >= 0)
    assert np.allclose(v, shuffled.qbc_variance(X), atol=1e-15)


class TestTrainCommittee:
    data = (make_rng(0).uniform(-1, 1, (40, 1)),)

    def _xy(self):
        X = self.data[0]
        return X, np.sin(3 * X[:, 0])

    def test_forced_identical_seeds(self):
        X, y = self._xy()
        spec = ModelSpec.from_hidden(1, (8,), 1)
        c = train_committee(spec, X, y, TrainConfig(max_epochs=20, patience=20),
                            n_members=2, member_seeds=[7, 7])
        assert np.all(c.qbc_variance(X) == 0)

    def test_distinct_members(self):
        X, y = self._xy()
        spec = ModelSpec.from_hidden(1, (20,) * 9, 1)
        c = train_committee(spec, X, y, TrainConfig(max_epochs=3, patience=3), n_members=10)
        dumps = {m.dump() for m in c.members}
        assert len(dumps) == 10

    def test_repeatable(self):
        X, y = self._xy()
        spec = ModelSpec.from_hidden(1, (8, 8), 1)
        cfg = TrainConfig(max_epochs=10, patience=10, batch_size=16)
        a = train_committee(spec, X, y, cfg, base_seed=3, n_members=3)
        b = train_committee(spec, X, y, cfg, base_seed=3, n_members=3)
        assert all(p.dump() == q.dump() for p, q in zip(a.members, b.members))

    def test_divergence_names_member(self):
        X, _ = self._xy()
        from naqbc.exceptions import NumericDivergenceError
        spec = ModelSpec.from_hidden(1, (4,), 1)
        with np.errstate(all="ignore"), pytest.raises(NumericDivergenceError) as info:
            train_committee(spec, X, np.full(40, 1e200), TrainConfig(max_epochs=3, patience=3),
                            n_members=2)
        assert info.value.member == 0


class TestEstimators:
    def test_committee_regressor_api(self):
        X = make_rng(1).uniform(-1, 1, (60, 2))
        y = X[:, 0] - X[:, 1]
        est = QBCCommitteeRegressor(hidden_layer_sizes=(16,), n_members=3, max_epochs=300,
                                    patience=50, learning_rate=1e-2)
        assert clone(est).get_params()["n_members"] == 3
        est.fit(X, y)
        assert est.predict(X).shape == (60,)
        assert est.score(X, y) > 0.9
        assert est.qbc_variance(X).shape == (60,)
        assert est.qbc_variance_gradient(X[:3]).shape == (3, 2)

    def test_warm_start_continues(self):
        X = make_rng(2).uniform(-1, 1, (30, 1))
        y = X[:, 0] ** 2
        est = QBCCommitteeRegressor(hidden_layer_sizes=(8,), n_members=2, max_epochs=5,
                                    patience=5, warm_start=True)
        t1 = est.fit(X, y).committee_.members[0].optimizer_state.t
        t2 = est.fit(X, y).committee_.members[0].optimizer_state.t
        assert t2 > t1

    def test_dropout_regressor(self):
        X = make_rng(3).uniform(-1, 1, (30, 1))
        est = DropoutMLPRegressor(hidden_layer_sizes=(16, 16), max_epochs=10, patience=10)
        est.fit(X, X[:, 0])
        v = est.mc_variance(X, passes=5, rng=0)
        assert v.shape == (30,) and np.all(v >= 0)

    def test_dropout_rate_zero_rejected(self):
        with pytest.raises(ConfigurationError):
            DropoutMLPRegressor(dropout_rate=0.0).fit(np.zeros((3, 1)), np.zeros(3))


class TestMcDropout:
    def test_replayed_masks(self):
        m = init_model([2, 10, 10, 1], seed=4, dropout_rate=0.2)
        X = make_rng(0).uniform(-1, 1, (6, 2))
        got = mc_dropout_variance(m, X, passes=4, rng=11)
        rng = make_rng(11)
        preds = np.stack([forward(m, X, sample_dropout_masks(m, 6, rng)) for _ in range(4)])
        assert np.allclose(got, preds.var(axis=0).mean(axis=1), atol=1e-15)

    def test_reproducible(self):
        m = init_model([1, 8, 1], seed=1, dropout_rate=0.3)
        X = np.linspace(-1, 1, 9).reshape(-1, 1)
        assert np.array_equal(mc_dropout_variance(m, X, 2, 5), mc_dropout_variance(m, X, 2, 5))

    @pytest.mark.parametrize("rate,passes", [(0.0, 5), (0.1, 1)])
    def test_preconditions(self, rate, passes):
        with pytest.raises(ConfigurationError):
            mc_dropout_variance(init_model([1, 4, 1], dropout_rate=rate), np.zeros((2, 1)), passes)
