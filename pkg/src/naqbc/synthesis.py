"""Query synthesis: gradient ascent on committee disagreement inside a box.

Each of the ``k`` queries starts from a uniform random point and follows Adam
on ``q(x) - L_bnd(x)``, where ``L_bnd`` is a hinge penalty for leaving the
box. Trajectories are independent; the ``k`` end points are all kept.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ConfigurationError, NumericDivergenceError, ShapeError
from .nn import AdamState, adam_step
from .utils import as_2d, make_rng


@dataclass(frozen=True)
class HyperRectangle:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeError("lower and upper must be vectors of equal length")
        if not np.all(lo < hi):
            raise ConfigurationError("every lower bound must be below its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "HyperRectangle":
        """The [-1, 1]^dim cube used by every benchmark problem."""
        return cls(-np.ones(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def ranges(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def sample(self, n: int, rng) -> np.ndarray:
        return make_rng(rng).uniform(self.lower, self.upper, size=(int(n), self.dim))


def _excess(X, domain):
    return np.abs(X - domain.midpoint) - 0.5 * domain.ranges


def boundary_loss(x, domain: HyperRectangle, strength: float = 1.0):
    """``strength * sum_d relu(|x_d - mid_d| - range_d / 2)``; zero inside the box."""
    single = np.ndim(x) == 1
    X = as_2d(x, domain.dim)
    loss = strength * np.maximum(_excess(X, domain), 0.0).sum(axis=1)
    return float(loss[0]) if single else loss


def boundary_loss_gradient(x, domain: HyperRectangle, strength: float = 1.0):
    """Subgradient of :func:`boundary_loss`, taking 0 on the box surface."""
    single = np.ndim(x) == 1
    X = as_2d(x, domain.dim)
    g = strength * np.sign(X - domain.midpoint) * (_excess(X, domain) > 0.0)
    return g[0] if single else g


@dataclass
class SynthesisConfig:
    steps: int = 300
    learning_rate: float = 0.01
    boundary_strength: float = 1.0
    convergence_log: bool = False
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if int(self.steps) < 1:
            raise ConfigurationError("synthesis needs at least one ascent step")
        if not self.learning_rate > 0:
            raise ConfigurationError("synthesis learning rate must be positive")
        if self.boundary_strength < 0:
            raise ConfigurationError("boundary strength must be non-negative")


@dataclass
class SynthesisResult:
    queries: np.ndarray
    initial: np.ndarray
    reinitialized: np.ndarray
    n_evaluations: int
    variance_trace: Optional[np.ndarray] = None
    boundary_trace: Optional[np.ndarray] = None
    final_variance: np.ndarray = field(default=None)

    def write_trace(self, path) -> None:
        """CSV with columns query_id, step, variance, boundary_loss."""
        if self.variance_trace is None:
            raise ValueError("no trace recorded; set convergence_log=True")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["query_id", "step", "variance", "boundary_loss"])
            for step, (vrow, brow) in enumerate(zip(self.variance_trace, self.boundary_trace)):
                for q, (v, b) in enumerate(zip(vrow, brow)):
                    w.writerow([q, step, repr(float(v)), repr(float(b))])


def synthesize_queries(committee, domain: HyperRectangle, k: int,
                       cfg: Optional[SynthesisConfig] = None, rng=None,
                       initial=None) -> SynthesisResult:
    """Synthesize ``k`` queries by independent Adam ascent from random starts.

    ``committee`` needs ``qbc_variance`` and ``qbc_variance_gradient`` on row
    batches. A point whose objective turns non-finite is restarted once from a
    fresh uniform sample; a second failure raises
    :class:`~naqbc.exceptions.NumericDivergenceError`. End points left outside
    the closed box are replaced by fresh uniform samples.

    ``initial`` overrides the random starting points (shape ``(k, d_x)``).
    """
    cfg = cfg or SynthesisConfig()
    if int(k) < 1:
        raise ConfigurationError("k must be at least 1")
    rng = make_rng(0 if rng is None else rng)
    X = domain.sample(k, rng)
    if initial is not None:
        X = as_2d(initial, domain.dim, name="initial").copy()
        if X.shape[0] != k:
            raise ShapeError(f"initial has {X.shape[0]} rows, expected {k}")
    initial = X.copy()
    state = AdamState.zeros_like([X], np.zeros(k, dtype=np.int64))
    retried = np.zeros(k, dtype=bool)
    lam = cfg.boundary_strength
    log = cfg.convergence_log
    v_trace, b_trace = [], []
    n_eval = 0

    def evaluate(X):
        nonlocal n_eval
        n_eval += X.shape[0]
        return committee.qbc_variance(X)

    for step in range(int(cfg.steps)):
        var = evaluate(X)
        bnd = boundary_loss(X, domain, lam)
        bad = ~np.isfinite(var - bnd)
        if bad.any():
            if (bad & retried).any():
                j = int(np.flatnonzero(bad & retried)[0])
                raise NumericDivergenceError(
                    f"query {j} produced a non-finite objective twice", epoch=step)
            X = X.copy()
            X[bad] = domain.sample(int(bad.sum()), rng)
            retried |= bad
            for arr in (state.m[0], state.v[0]):
                arr[bad] = 0.0
            state.t[bad] = 0
            var = evaluate(X)
            bnd = boundary_loss(X, domain, lam)
        if log:
            v_trace.append(var)
            b_trace.append(bnd)
        # minimise L = L_bnd - q
        grad = boundary_loss_gradient(X, domain, lam) - committee.qbc_variance_gradient(X)
        (X,), state = adam_step([X], [grad], state, cfg.learning_rate,
                                cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    outside = ~domain.contains(X) | ~np.all(np.isfinite(X), axis=1)
    if outside.any():
        X = X.copy()
        X[outside] = domain.sample(int(outside.sum()), rng)
    final_var = evaluate(X)
    if log:
        v_trace.append(final_var)
        b_trace.append(boundary_loss(X, domain, lam))
    return SynthesisResult(
        queries=X, initial=initial, reinitialized=outside, n_evaluations=n_eval,
        variance_trace=np.array(v_trace) if log else None,
        boundary_trace=np.array(b_trace) if log else None,
        final_variance=final_var,
    )
