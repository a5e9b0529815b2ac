"""Labelling functions and the benchmark problem registry."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import ConfigurationError, ShapeError, UnsupportedOracleError
from .synthesis import HyperRectangle
from .utils import as_2d, derive_seed, make_rng

SINE_A1 = 3.0
SINE_A2 = 30.0
ARM_LENGTHS = np.array([0.5, 0.5, 1.0])
IDW_EPS = 1e-9


def sine_oracle(x):
    """``x * sin(3 sin(30 x))``; accepts a scalar, a vector, or an ``(n, 1)`` array."""
    x = np.asarray(x, dtype=np.float64)
    return x * np.sin(SINE_A1 * np.sin(SINE_A2 * x))


def arm_oracle(x):
    """Planar arm: rail offset ``x[0]`` plus three links at angles ``pi/2 * x[1:]``."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != 4:
        raise ShapeError(f"arm oracle expects 4 inputs, got {X.shape[1]}")
    ang = 0.5 * np.pi * X[:, 1:]
    y0 = np.cos(ang) @ ARM_LENGTHS
    y1 = X[:, 0] + np.sin(ang) @ ARM_LENGTHS
    Y = np.column_stack([y0, y1])
    return Y[0] if single else Y


class DatasetOracle:
    """Inverse-distance-weighted interpolation over a fixed table.

    Inputs are min-max scaled per column onto [-1, 1]; queries are given in
    that scaled space. A query that coincides with a scaled table row returns
    the row's target exactly.
    """

    def __init__(self, x_raw, y, neighbors: int = 5):
        x_raw = np.asarray(x_raw, dtype=np.float64)
        if x_raw.size == 0:
            raise ConfigurationError("dataset oracle needs a non-empty table")
        x_raw = as_2d(x_raw)
        y = np.asarray(y, dtype=np.float64)
        y = y.reshape(-1, 1) if y.ndim == 1 else y
        if y.shape[0] != x_raw.shape[0]:
            raise ShapeError("inputs and targets have different row counts")
        if int(neighbors) < 1:
            raise ConfigurationError("neighbors must be positive")
        self.x_min = x_raw.min(axis=0)
        self.x_max = x_raw.max(axis=0)
        span = self.x_max - self.x_min
        self._span = np.where(span > 0, span, 1.0)
        self.x_scaled = self.scale(x_raw)
        self.y = y
        self.neighbors = min(int(neighbors), x_raw.shape[0])
        self._tree = cKDTree(self.x_scaled)

    @property
    def d_x(self) -> int:
        return self.x_scaled.shape[1]

    @property
    def d_y(self) -> int:
        return self.y.shape[1]

    def scale(self, x_raw):
        return 2.0 * (np.asarray(x_raw, dtype=np.float64) - self.x_min) / self._span - 1.0

    def __call__(self, x):
        single = np.ndim(x) == 1
        X = as_2d(x, self.d_x)
        dist, idx = self._tree.query(X, k=self.neighbors)
        dist = dist.reshape(X.shape[0], -1)
        idx = idx.reshape(X.shape[0], -1)
        w = 1.0 / (IDW_EPS + dist)
        out = np.einsum("nk,nkd->nd", w, self.y[idx]) / w.sum(axis=1, keepdims=True)
        hit = dist[:, 0] == 0.0
        out[hit] = self.y[idx[hit, 0]]
        return out[0] if single else out

    @classmethod
    def from_file(cls, path, inputs: Sequence[str], outputs: Sequence[str],
                  delimiter: Optional[str] = None, neighbors: int = 5) -> "DatasetOracle":
        """Load a delimited text file with a header row.

        The delimiter is sniffed from the header when not given. Empty or
        non-numeric cells in the declared columns are rejected.
        """
        with open(path, newline="") as fh:
            text = fh.read()
        if delimiter is None:
            first = text.splitlines()[0] if text else ""
            delimiter = next((d for d in (",", "\t", ";") if d in first), None)
        rows = list(csv.reader(text.splitlines(), delimiter=delimiter or ",")) if delimiter \
            else [line.split() for line in text.splitlines()]
        rows = [r for r in rows if r]
        if not rows:
            raise ConfigurationError(f"{path}: empty file")
        header = [h.strip() for h in rows[0]]
        cols = list(inputs) + list(outputs)
        missing = [c for c in cols if c not in header]
        if missing:
            raise ConfigurationError(f"{path}: columns not found: {missing}")
        pos = [header.index(c) for c in cols]
        data = np.empty((len(rows) - 1, len(cols)))
        for r, row in enumerate(rows[1:], start=2):
            for c, p in enumerate(pos):
                cell = row[p].strip() if p < len(row) else ""
                try:
                    value = float(cell)
                except ValueError:
                    raise ConfigurationError(f"{path}:{r}: missing or invalid value "
                                             f"in column {cols[c]!r}") from None
                if not np.isfinite(value):
                    raise ConfigurationError(f"{path}:{r}: non-finite value in {cols[c]!r}")
                data[r - 2, c] = value
        n_in = len(inputs)
        return cls(data[:, :n_in], data[:, n_in:], neighbors)


@dataclass(frozen=True)
class Problem:
    """A benchmark: domain, oracle and the default experimental constants."""

    name: str
    d_x: int
    d_y: int
    e_star: float
    hidden: tuple
    n_ens: int = 10
    n_0: int = 80
    k: int = 40
    n_test: int = 4000
    oracle: Optional[Callable] = field(default=None, compare=False, repr=False)
    supported: bool = True
    domain: Optional[HyperRectangle] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.domain is None:
            object.__setattr__(self, "domain", HyperRectangle.unit(self.d_x))
        if not self.e_star > 0:
            raise ConfigurationError("e_star must be positive")
        for name in ("d_x", "d_y", "n_ens", "n_0", "k", "n_test"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be a positive integer")
        if self.n_ens < 2:
            raise ConfigurationError("n_ens must be at least 2")

    @property
    def widths(self) -> tuple:
        return (self.d_x,) + tuple(self.hidden) + (self.d_y,)

    def label(self, X) -> np.ndarray:
        if not self.supported or self.oracle is None:
            raise UnsupportedOracleError(f"problem {self.name!r} has no oracle in this package")
        X = as_2d(X, self.d_x)
        return np.asarray(self.oracle(X), dtype=np.float64).reshape(X.shape[0], self.d_y)

    def with_overrides(self, **kw) -> "Problem":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


_REGISTRY = {
    "sine": Problem("sine", 1, 1, 1e-3, (20,) * 9, oracle=sine_oracle),
    "arm": Problem("arm", 4, 2, 5e-5, (500,) * 4, oracle=arm_oracle),
    "stack": Problem("stack", 5, 201, 3e-5, (700,) * 9, supported=False),
    "adm": Problem("adm", 14, 2000, 3e-3, (1500,) * 6, n_ens=5, supported=False),
    # no published architecture for the two tabular problems
    "foil": Problem("foil", 5, 1, 3e-3, (200,) * 4, supported=False),
    "hydr": Problem("hydr", 6, 1, 7e-3, (200,) * 4, supported=False),
}
ALIASES = {"robo": "arm", "robotic_arm": "arm"}
PROBLEM_NAMES = tuple(_REGISTRY)


def get_problem(name: str, dataset: Optional[DatasetOracle] = None, **overrides) -> Problem:
    """Look up a registry entry; tabular problems need a ``dataset`` oracle."""
    key = ALIASES.get(name.lower(), name.lower())
    if key not in _REGISTRY:
        raise ConfigurationError(f"unknown problem {name!r}; known: {', '.join(PROBLEM_NAMES)}")
    p = _REGISTRY[key]
    if key in ("stack", "adm"):
        raise UnsupportedOracleError(
            f"problem {key!r} needs an external simulator and is not supported")
    if key in ("foil", "hydr"):
        if dataset is None:
            raise ConfigurationError(f"problem {key!r} needs a dataset file")
        if dataset.d_x != p.d_x or dataset.d_y != p.d_y:
            p = replace(p, d_x=dataset.d_x, d_y=dataset.d_y,
                        domain=HyperRectangle.unit(dataset.d_x))
        p = replace(p, oracle=dataset, supported=True)
    return p.with_overrides(**overrides)


def registry_defaults(name: str) -> Problem:
    """Registry constants without instantiating the oracle."""
    key = ALIASES.get(name.lower(), name.lower())
    if key not in _REGISTRY:
        raise ConfigurationError(f"unknown problem {name!r}")
    return _REGISTRY[key]


def make_test_set(problem: Problem, seed) -> tuple:
    """``(X, Y)`` with ``problem.n_test`` uniform draws, shared by every method."""
    rng = make_rng(derive_seed(seed, "test-set", problem.name))
    X = problem.domain.sample(problem.n_test, rng)
    return X, problem.label(X)
