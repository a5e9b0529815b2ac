"""Committees of MLP regressors and the query-by-committee disagreement score.

The disagreement at ``x`` is the population variance of member predictions,
averaged over output coordinates::

    q(x) = 1/(N * d_y) * sum_n || f_n(x) - mu(x) ||^2
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConfigurationError, NumericDivergenceError
from .nn import (
    MlpModel,
    TrainConfig,
    _backward_arrays,
    _forward_arrays,
    forward,
    init_model,
    sample_dropout_masks,
    train,
    train_stack,
)
from .utils import as_2d, derive_seed, make_rng, targets_2d


@dataclass(frozen=True)
class ModelSpec:
    """Architecture shared by every committee member."""

    widths: tuple
    activation: str = "relu"
    weight_init: str = "fan_in"
    bias_init: str = "zero"
    dropout_rate: float = 0.0

    @classmethod
    def from_hidden(cls, n_inputs, hidden, n_outputs, **kw) -> "ModelSpec":
        return cls((int(n_inputs),) + tuple(int(h) for h in hidden) + (int(n_outputs),), **kw)

    def build(self, seed) -> MlpModel:
        return init_model(self.widths, self.activation, seed, self.dropout_rate,
                          self.weight_init, self.bias_init)


class Committee:
    """Immutable ensemble of at least two same-shaped networks."""

    def __init__(self, members: Sequence[MlpModel]):
        members = list(members)
        if len(members) < 2:
            raise ConfigurationError("a committee needs at least two members")
        widths = members[0].widths
        if any(m.widths != widths or m.activation != members[0].activation for m in members):
            raise ConfigurationError("committee members must share one architecture")
        self.members = tuple(members)
        self._weights = [np.stack([m.weights[i] for m in members]) for i in range(len(widths) - 1)]
        self._biases = [np.stack([m.biases[i] for m in members]) for i in range(len(widths) - 1)]

    def __len__(self):
        return len(self.members)

    @property
    def n_inputs(self) -> int:
        return self.members[0].n_inputs

    @property
    def n_outputs(self) -> int:
        return self.members[0].n_outputs

    def member_predictions(self, X) -> np.ndarray:
        """Array of shape ``(n_members, n_rows, d_y)``."""
        X = as_2d(X, self.n_inputs)
        out, _ = _forward_arrays(self._weights, self._biases, X, self.members[0].activation)
        return out

    def mean_prediction(self, x) -> np.ndarray:
        single = np.ndim(x) == 1
        mu = self.member_predictions(x).mean(axis=0)
        return mu[0] if single else mu

    def qbc_variance(self, x) -> np.ndarray:
        """Disagreement score; a float for one point, shape ``(n,)`` for rows."""
        single = np.ndim(x) == 1
        preds = self.member_predictions(x)
        # Welford accumulation over members
        mean = np.zeros(preds.shape[1:])
        m2 = np.zeros(preds.shape[1:])
        for count, p in enumerate(preds, start=1):
            delta = p - mean
            mean += delta / count
            m2 += delta * (p - mean)
        var = np.maximum(m2 / len(preds), 0.0).mean(axis=-1)
        return float(var[0]) if single else var

    def qbc_variance_gradient(self, x) -> np.ndarray:
        """Exact input gradient of :meth:`qbc_variance`.

        ``2/(N d_y) * sum_n J_n^T (f_n - mu)``; the term through ``mu`` vanishes
        because the deviations sum to zero over members.
        """
        single = np.ndim(x) == 1
        X = as_2d(x, self.n_inputs)
        act = self.members[0].activation
        preds, cache = _forward_arrays(self._weights, self._biases, X, act)
        dev = preds - preds.mean(axis=0)
        upstream = dev * (2.0 / (preds.shape[0] * preds.shape[2]))
        _, g = _backward_arrays(self._weights, cache, upstream, act, need_params=False)
        g = g.sum(axis=0)
        return g[0] if single else g


def member_seed(base_seed, index) -> int:
    return derive_seed(base_seed, "member", index)


def train_committee(spec: ModelSpec, X, y, cfg: Optional[TrainConfig] = None, base_seed=0,
                    n_members: int = 10, previous: Optional[Committee] = None,
                    member_seeds: Optional[Sequence[int]] = None) -> Committee:
    """Train ``n_members`` networks on the full data set.

    Members differ only through their initial weights and shuffle order, both
    derived from ``(base_seed, member index)``. With ``cfg.warm_start`` and a
    ``previous`` committee, training resumes from its weights and Adam state.
    """
    cfg = cfg or TrainConfig()
    if n_members < 2:
        raise ConfigurationError("a committee needs at least two members")
    X = as_2d(X, spec.widths[0])
    if X.shape[0] < 1:
        raise ValueError("cannot train a committee on an empty data set")
    if member_seeds is None:
        member_seeds = [member_seed(base_seed, i) for i in range(n_members)]
    if len(member_seeds) != n_members:
        raise ConfigurationError("need one seed per member")
    if cfg.warm_start and previous is not None:
        if len(previous) != n_members:
            raise ConfigurationError("warm start committee has a different size")
        start = list(previous.members)
    else:
        start = [spec.build(s) for s in member_seeds]
    shuffle = [derive_seed(s, "shuffle", X.shape[0]) for s in member_seeds]
    try:
        members = train_stack(start, X, y, cfg, shuffle)
    except NumericDivergenceError as err:
        raise NumericDivergenceError(
            f"committee member {err.member} diverged: {err}", epoch=err.epoch, member=err.member
        ) from err
    return Committee(members)


class _MlpEstimatorMixin:
    def _train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, max_epochs=self.max_epochs,
                           patience=self.patience, batch_size=self.batch_size,
                           warm_start=self.warm_start)

    def _spec(self, n_in, n_out, dropout_rate=0.0) -> ModelSpec:
        return ModelSpec.from_hidden(n_in, self.hidden_layer_sizes, n_out,
                                     activation=self.activation, weight_init=self.weight_init,
                                     bias_init=self.bias_init, dropout_rate=dropout_rate)

    def _prepare(self, X, y):
        X = as_2d(X)
        y_arr = np.asarray(y, dtype=np.float64)
        self._y_1d = y_arr.ndim == 1
        Y = targets_2d(y_arr, X.shape[0])
        return X, Y

    def _shape_output(self, out):
        return out[:, 0] if self._y_1d else out


class QBCCommitteeRegressor(_MlpEstimatorMixin, RegressorMixin, BaseEstimator):
    """Ensemble of MLPs whose mean is the prediction and whose spread is the
    query-by-committee score.

    With ``warm_start=True`` a repeated ``fit`` continues from the current
    members (weights and Adam moments) instead of re-initialising them.
    """

    def __init__(self, hidden_layer_sizes=(20,) * 9, n_members=10, activation="relu",
                 learning_rate=1e-3, max_epochs=500, patience=20, batch_size="auto",
                 weight_init="fan_in", bias_init="zero", warm_start=False, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.n_members = n_members
        self.activation = activation
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.weight_init = weight_init
        self.bias_init = bias_init
        self.warm_start = warm_start
        self.random_state = random_state

    def fit(self, X, y):
        X, Y = self._prepare(X, y)
        previous = getattr(self, "committee_", None) if self.warm_start else None
        if previous is not None and (previous.n_inputs != X.shape[1]
                                     or previous.n_outputs != Y.shape[1]):
            previous = None
        self.committee_ = train_committee(
            self._spec(X.shape[1], Y.shape[1]), X, Y, self._train_config(),
            base_seed=self.random_state, n_members=self.n_members, previous=previous)
        self.n_features_in_ = X.shape[1]
        self.n_outputs_ = Y.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "committee_")
        return self._shape_output(self.committee_.mean_prediction(as_2d(X, self.n_features_in_)))

    def qbc_variance(self, X):
        check_is_fitted(self, "committee_")
        return self.committee_.qbc_variance(as_2d(X, self.n_features_in_))

    def qbc_variance_gradient(self, X):
        check_is_fitted(self, "committee_")
        return self.committee_.qbc_variance_gradient(as_2d(X, self.n_features_in_))


class DropoutMLPRegressor(_MlpEstimatorMixin, RegressorMixin, BaseEstimator):
    """Single MLP trained with dropout; Monte Carlo passes give the BALD score."""

    def __init__(self, hidden_layer_sizes=(20,) * 9, dropout_rate=0.1, activation="relu",
                 learning_rate=1e-3, max_epochs=500, patience=20, batch_size="auto",
                 weight_init="fan_in", bias_init="zero", warm_start=False, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.dropout_rate = dropout_rate
        self.activation = activation
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.patience = patience
        self.batch_size = batch_size
        self.weight_init = weight_init
        self.bias_init = bias_init
        self.warm_start = warm_start
        self.random_state = random_state

    def fit(self, X, y):
        if not 0.0 < self.dropout_rate < 1.0:
            raise ConfigurationError("dropout_rate must be in (0, 1) for MC dropout")
        X, Y = self._prepare(X, y)
        seed = derive_seed(self.random_state, "dropout-net")
        model = getattr(self, "model_", None) if self.warm_start else None
        if model is None or model.widths != (X.shape[1],) + tuple(self.hidden_layer_sizes) + (Y.shape[1],):
            model = self._spec(X.shape[1], Y.shape[1], self.dropout_rate).build(seed)
        self.model_ = train(model, X, Y, self._train_config(),
                            rng=derive_seed(seed, "shuffle", X.shape[0]))
        self.n_features_in_ = X.shape[1]
        self.n_outputs_ = Y.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self._shape_output(forward(self.model_, as_2d(X, self.n_features_in_)))

    def mc_variance(self, X, passes=25, rng=None):
        check_is_fitted(self, "model_")
        return mc_dropout_variance(self.model_, X, passes, rng)


def mc_dropout_variance(model: MlpModel, X, passes: int = 25, rng=None) -> np.ndarray:
    """Per-row variance over ``passes`` stochastic forward passes, averaged over outputs.

    Masks are drawn pass by pass from ``rng`` (one mask row per input row).
    """
    if model.dropout_rate <= 0.0:
        raise ConfigurationError("MC dropout needs dropout_rate > 0")
    if passes < 2:
        raise ConfigurationError("MC dropout needs at least two passes")
    X = as_2d(X, model.n_inputs)
    rng = make_rng(0 if rng is None else rng)
    preds = np.stack([forward(model, X, sample_dropout_masks(model, X.shape[0], rng))
                      for _ in range(passes)])
    return preds.var(axis=0).mean(axis=-1)
