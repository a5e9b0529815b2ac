"""Pool-based batch selectors.

Every selector takes a scoring source plus a :class:`Pool` and returns ``k``
distinct row indices into ``pool.candidates``. Ties always resolve toward the
lower pool index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .ensemble import mc_dropout_variance
from .exceptions import ConfigurationError
from .utils import as_2d

METHODS = ("qbc", "div_qbc", "dendiv_qbc", "bald", "coreset")
DENSITY_NEIGHBORS = 10
_MAX_POOL = 2**31 - 1


@dataclass(frozen=True)
class Pool:
    candidates: np.ndarray
    gamma: int
    k: int

    @property
    def size(self) -> int:
        return self.candidates.shape[0]


def sample_pool(domain, gamma: int, k: int, rng) -> Pool:
    """Draw ``gamma * k`` i.i.d. uniform candidates from ``domain``."""
    gamma, k = int(gamma), int(k)
    if gamma < 1 or k < 1:
        raise ConfigurationError("gamma and k must both be at least 1")
    if gamma > _MAX_POOL // k:
        raise ConfigurationError(f"pool size gamma*k = {gamma}*{k} overflows")
    return Pool(domain.sample(gamma * k, rng), gamma, k)


def _candidates(pool):
    return pool.candidates if isinstance(pool, Pool) else as_2d(pool)


def _check_k(k, n):
    k = int(k)
    if n < 1:
        raise ConfigurationError("pool is empty")
    if not 1 <= k <= n:
        raise ConfigurationError(f"k={k} must lie in [1, {n}]")
    return k


def top_k(scores, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores; equal scores keep pool order."""
    scores = np.asarray(scores, dtype=np.float64)
    k = _check_k(k, scores.size)
    return np.argsort(-scores, kind="stable")[:k]


def minmax(values) -> np.ndarray:
    """Scale to [0, 1]; a constant vector maps to zeros."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values
    lo, hi = values.min(), values.max()
    if hi - lo <= 0.0:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def _argmax_first(values, available):
    masked = np.where(available, values, -np.inf)
    return int(np.argmax(masked))


def select_qbc(committee, pool, k: int) -> np.ndarray:
    X = _candidates(pool)
    return top_k(committee.qbc_variance(X), k)


def density_scores(X, n_neighbors: int = DENSITY_NEIGHBORS) -> np.ndarray:
    """Negated mean distance to the nearest pool neighbours (dense is high).

    Pools with fewer than ``n_neighbors + 1`` rows use every other row.
    """
    X = as_2d(X)
    n = X.shape[0]
    if n < 2:
        return np.zeros(n)
    m = min(int(n_neighbors), n - 1)
    D = cdist(X, X)
    np.fill_diagonal(D, np.inf)
    nearest = np.sort(D, axis=1)[:, :m]
    return -nearest.mean(axis=1)


def greedy_diverse(X, variance, k, density=None) -> np.ndarray:
    """Greedy batch with equal-weight, per-step min-max normalised terms.

    At each pick the remaining candidates are scored by the mean of the
    normalised variance, the normalised distance to the nearest pick so far
    (absent for the first pick), and optionally the normalised density.
    """
    X = as_2d(X)
    n = X.shape[0]
    k = _check_k(k, n)
    variance = np.asarray(variance, dtype=np.float64)
    available = np.ones(n, dtype=bool)
    nearest = np.full(n, np.inf)
    picks = []
    n_terms = 2 if density is None else 3
    for step in range(k):
        idx = np.flatnonzero(available)
        total = minmax(variance[idx])
        if step > 0:
            total = total + minmax(nearest[idx])
        if density is not None:
            total = total + minmax(density[idx])
        score = np.full(n, -np.inf)
        score[idx] = total / n_terms
        j = _argmax_first(score, available)
        picks.append(j)
        available[j] = False
        nearest = np.minimum(nearest, np.linalg.norm(X - X[j], axis=1))
    return np.asarray(picks, dtype=np.int64)


def select_div_qbc(committee, pool, k: int) -> np.ndarray:
    X = _candidates(pool)
    return greedy_diverse(X, committee.qbc_variance(X), k)


def select_dendiv_qbc(committee, pool, k: int) -> np.ndarray:
    X = _candidates(pool)
    return greedy_diverse(X, committee.qbc_variance(X), k, density=density_scores(X))


def select_bald_mcdropout(dropout_model, pool, k: int, passes: int = 25, rng=None) -> np.ndarray:
    X = _candidates(pool)
    return top_k(mc_dropout_variance(dropout_model, X, passes, rng), k)


def select_coreset(train_xs, pool, k: int) -> np.ndarray:
    """Greedy k-centre: repeatedly take the candidate farthest from train and picks."""
    X = _candidates(pool)
    T = as_2d(train_xs, X.shape[1])
    if T.shape[0] == 0:
        raise ConfigurationError("core-set selection needs a non-empty training set")
    k = _check_k(k, X.shape[0])
    nearest = cdist(X, T).min(axis=1)
    available = np.ones(X.shape[0], dtype=bool)
    picks = []
    for _ in range(k):
        j = _argmax_first(nearest, available)
        picks.append(j)
        available[j] = False
        nearest = np.minimum(nearest, np.linalg.norm(X - X[j], axis=1))
    return np.asarray(picks, dtype=np.int64)


def mean_pairwise_distance(X) -> float:
    """Mean Euclidean distance over unordered pairs of rows."""
    X = as_2d(X)
    n = X.shape[0]
    if n < 2:
        return 0.0
    D = cdist(X, X)
    return float(D[np.triu_indices(n, 1)].mean())
