"""Dense feed-forward regressors in numpy.

Hidden layers use ``relu`` or ``tanh``; the output layer is always linear.
Besides parameter gradients for training, the backward pass also returns the
gradient with respect to the *input*, which is what query synthesis climbs.

Several same-shaped networks can be trained at once as a *stack*: every weight
array gains a leading member axis and each matmul becomes a batched matmul.
Members still get their own initialisation, shuffle order, Adam moments and
early stopping; stacking only removes per-member Python overhead.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .exceptions import ConfigurationError, NumericDivergenceError, ShapeError
from .utils import as_2d, make_rng, targets_2d

ACTIVATIONS = ("relu", "tanh")
WEIGHT_INITS = ("fan_in", "he")
BIAS_INITS = ("zero", "fan_in")


@dataclass
class AdamState:
    m: list
    v: list
    t: object = 0  # int, or (M,) int array for a stack

    @classmethod
    def zeros_like(cls, params, t=0) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], t)


@dataclass
class MlpModel:
    """One committee member.

    ``weights[l]`` has shape ``(widths[l], widths[l + 1])`` so a layer computes
    ``h @ W + b``.
    """

    widths: tuple
    weights: list
    biases: list
    activation: str = "relu"
    dropout_rate: float = 0.0
    seed: int = 0
    best_loss: Optional[float] = None
    optimizer_state: Optional[AdamState] = field(default=None, repr=False)

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]

    @property
    def n_hidden_layers(self) -> int:
        return len(self.widths) - 2

    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def with_params(self, params) -> "MlpModel":
        new = copy.copy(self)
        new.weights = [np.array(p, copy=True) for p in params[0::2]]
        new.biases = [np.array(p, copy=True) for p in params[1::2]]
        return new

    def dump(self) -> str:
        """Plain-text listing of every matrix and bias, layer order, row-major."""
        lines = [f"widths {' '.join(map(str, self.widths))}", f"activation {self.activation}"]
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            lines.append(f"W{i} {W.shape[0]} {W.shape[1]}")
            lines.extend(" ".join(repr(float(v)) for v in row) for row in W)
            lines.append(f"b{i} {b.shape[0]}")
            lines.append(" ".join(repr(float(v)) for v in b))
        return "\n".join(lines) + "\n"


def init_model(widths: Sequence[int], activation: str = "relu", seed: int = 0,
               dropout_rate: float = 0.0, weight_init: str = "fan_in",
               bias_init: str = "zero") -> MlpModel:
    """Random network from ``seed``.

    ``weight_init="fan_in"`` draws U(-1/sqrt(fan_in), 1/sqrt(fan_in));
    ``"he"`` draws U(-sqrt(6/fan_in), sqrt(6/fan_in)). ``bias_init="fan_in"``
    draws biases from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) instead of zeros.
    """
    widths = tuple(int(w) for w in widths)
    if len(widths) < 3:
        raise ConfigurationError(
            f"need input, at least one hidden and output width, got {list(widths)}")
    if any(w <= 0 for w in widths):
        raise ConfigurationError(f"layer widths must be positive, got {list(widths)}")
    if activation not in ACTIVATIONS:
        raise ConfigurationError(f"unknown activation {activation!r}")
    if weight_init not in WEIGHT_INITS:
        raise ConfigurationError(f"unknown weight_init {weight_init!r}")
    if bias_init not in BIAS_INITS:
        raise ConfigurationError(f"unknown bias_init {bias_init!r}")
    if not 0.0 <= dropout_rate < 1.0:
        raise ConfigurationError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
    rng = make_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / fan_in) if weight_init == "he" else 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        if bias_init == "zero":
            biases.append(np.zeros(fan_out))
        else:
            b_bound = 1.0 / np.sqrt(fan_in)
            biases.append(rng.uniform(-b_bound, b_bound, size=fan_out))
    return MlpModel(widths, weights, biases, activation, float(dropout_rate), int(seed))


def sample_dropout_masks(model: MlpModel, n_rows: int, rng) -> list:
    """Keep-masks (1 = keep) for every hidden layer, one row per input row."""
    return _masks(model.widths, model.dropout_rate, (n_rows,), rng)


def _masks(widths, rate, lead_shape, rng):
    keep = 1.0 - rate
    return [(rng.random(lead_shape + (w,)) < keep).astype(np.float64) for w in widths[1:-1]]


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(z, a, kind):
    if kind == "relu":
        return (z > 0.0).astype(z.dtype)
    return 1.0 - a * a


def _bias(b):
    # stacked biases (M, fo) broadcast over the row axis of (M, n, fo)
    return b[..., None, :] if b.ndim == 2 else b


def _forward_arrays(weights, biases, X, activation, keep=1.0, masks=None):
    """Forward pass on plain or member-stacked arrays.

    Plain: ``W`` is ``(fi, fo)`` and ``X`` is ``(n, fi)``. Stacked: ``W`` is
    ``(M, fi, fo)`` and ``X`` is ``(n, fi)`` or ``(M, n, fi)``. The cache holds
    ``(layer input, preactivation, activation, dropout scale)`` per layer.
    """
    cache = []
    h = X
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = np.matmul(h, W) + _bias(b)
        if i == last:
            cache.append((h, z, None, None))
            return z, cache
        a = _act(z, activation)
        scale = None if masks is None else masks[i] / keep
        cache.append((h, z, a, scale))
        h = a if scale is None else a * scale
    raise AssertionError("unreachable")


def _backward_arrays(weights, cache, grad_out, activation, need_params=True):
    """Reverse accumulation; returns (param grads or None, grad w.r.t. input)."""
    n_layers = len(weights)
    grads = [None] * (2 * n_layers) if need_params else None
    g = grad_out
    for i in range(n_layers - 1, -1, -1):
        h, z, a, scale = cache[i]
        if i < n_layers - 1:
            if scale is not None:
                g = g * scale
            g = g * _act_grad(z, a, activation)
        if need_params:
            grads[2 * i] = np.matmul(np.swapaxes(h, -1, -2), g)
            grads[2 * i + 1] = g.sum(axis=-2)
        g = np.matmul(g, np.swapaxes(weights[i], -1, -2))
    return grads, g


def forward(model: MlpModel, x, dropout_mask=None) -> np.ndarray:
    """Evaluate the network on one vector (returns a vector) or a batch of rows."""
    x_arr = np.asarray(x, dtype=np.float64)
    single = x_arr.ndim == 1
    X = as_2d(x_arr, model.n_inputs, name="x")
    if dropout_mask is not None and single:
        dropout_mask = [np.asarray(m, dtype=np.float64).reshape(1, -1) for m in dropout_mask]
    out, _ = _forward_arrays(model.weights, model.biases, X, model.activation,
                             1.0 - model.dropout_rate, dropout_mask)
    return out[0] if single else out


def input_gradient(model: MlpModel, x, upstream) -> np.ndarray:
    """``J(x)^T @ upstream`` for one point or row-wise for a batch."""
    x_arr = np.asarray(x, dtype=np.float64)
    single = x_arr.ndim == 1
    X = as_2d(x_arr, model.n_inputs, name="x")
    U = np.asarray(upstream, dtype=np.float64)
    if U.size != X.shape[0] * model.n_outputs:
        raise ShapeError(f"upstream of size {U.size} does not match "
                         f"{X.shape[0]} rows x {model.n_outputs} outputs")
    U = U.reshape(X.shape[0], model.n_outputs)
    _, cache = _forward_arrays(model.weights, model.biases, X, model.activation)
    _, g = _backward_arrays(model.weights, cache, U, model.activation, need_params=False)
    return g[0] if single else g


def _bias_correction(beta, t, like):
    c = 1.0 - beta ** np.asarray(t, dtype=np.float64)
    if c.ndim:
        c = c.reshape(c.shape + (1,) * (like.ndim - c.ndim))
    return c


def adam_step(params, grads, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``.

    ``state.t`` may be an array with one step counter per stacked member.
    """
    if len(params) != len(grads) or len(params) != len(state.m) or len(params) != len(state.v):
        raise ShapeError("params, grads and optimizer state differ in length")
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape or p.shape != v.shape:
            raise ShapeError(f"shape mismatch {p.shape} / {g.shape} / {m.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / _bias_correction(beta1, t, p)
        v_hat = v / _bias_correction(beta2, t, p)
        new_params.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 500
    patience: int = 20
    batch_size: object = "auto"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    min_delta: float = 1e-7
    full_batch_below: int = 2048
    auto_batch_size: int = 512
    warm_start: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if int(self.max_epochs) < 1:
            raise ConfigurationError("max_epochs must be >= 1")
        if int(self.patience) < 1 or self.patience > self.max_epochs:
            raise ConfigurationError("patience must be in [1, max_epochs]")
        if self.batch_size not in ("auto", "full"):
            if int(self.batch_size) < 1:
                raise ConfigurationError("batch_size must be positive, 'full' or 'auto'")
            self.batch_size = int(self.batch_size)

    def resolve_batch_size(self, n: int) -> int:
        if self.batch_size == "full":
            return n
        if self.batch_size == "auto":
            return n if n < self.full_batch_below else self.auto_batch_size
        return min(int(self.batch_size), n)


def _stack(arrays):
    return np.stack(arrays, axis=0)


def _check_stack(models):
    if not models:
        raise ValueError("no models to train")
    ref = models[0]
    for m in models[1:]:
        if m.widths != ref.widths or m.activation != ref.activation \
                or m.dropout_rate != ref.dropout_rate:
            raise ConfigurationError("stacked models must share architecture and dropout rate")


def train_stack(models: List[MlpModel], X, y, cfg: Optional[TrainConfig] = None,
                rngs=None) -> List[MlpModel]:
    """Train same-architecture models side by side; see :func:`train`.

    ``rngs`` supplies one generator (or seed) per model for its shuffle order
    and dropout masks. Each member stops on its own patience counter and
    returns its own best-loss snapshot.
    """
    cfg = cfg or TrainConfig()
    _check_stack(models)
    ref = models[0]
    X = as_2d(X, ref.n_inputs)
    Y = targets_2d(y, X.shape[0])
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    if Y.shape[1] != ref.n_outputs:
        raise ShapeError(f"targets have {Y.shape[1]} columns, model outputs {ref.n_outputs}")
    M = len(models)
    if rngs is None:
        rngs = [m.seed for m in models]
    rngs = [make_rng(r) for r in rngs]
    if len(rngs) != M:
        raise ValueError("need one rng per model")

    n = X.shape[0]
    batch = cfg.resolve_batch_size(n)
    full = batch >= n
    dropout = ref.dropout_rate > 0.0
    keep = 1.0 - ref.dropout_rate
    act = ref.activation

    shapes = [p.shape for p in ref.params()]
    sizes = [int(np.prod(sh)) for sh in shapes]

    def flat_of(arrays_per_model):
        return _stack([np.concatenate([a.ravel() for a in arrs]) for arrs in arrays_per_model])

    def views(flat):
        out, off = [], 0
        for sh, sz in zip(shapes, sizes):
            out.append(flat[:, off:off + sz].reshape((M,) + sh))
            off += sz
        return out

    flat = flat_of([m.params() for m in models])
    if cfg.warm_start and all(m.optimizer_state is not None for m in models):
        state = AdamState([flat_of([m.optimizer_state.m for m in models])],
                          [flat_of([m.optimizer_state.v for m in models])],
                          np.array([m.optimizer_state.t for m in models], dtype=np.int64))
    else:
        state = AdamState.zeros_like([flat], np.zeros(M, dtype=np.int64))

    best_loss = np.full(M, np.inf)
    best_flat = flat.copy()
    best_m, best_v = state.m[0].copy(), state.v[0].copy()
    best_t = np.array(state.t, copy=True)
    stale = np.zeros(M, dtype=np.int64)
    active = np.ones(M, dtype=bool)

    def masks_for(n_rows):
        if not dropout:
            return None
        per = [_masks(ref.widths, ref.dropout_rate, (n_rows,), r) for r in rngs]
        return [_stack([pm[i] for pm in per]) for i in range(len(per[0]))]

    def step(xb, yb, masks):
        nonlocal flat, state
        params = views(flat)
        out, cache = _forward_arrays(params[0::2], params[1::2], xb, act, keep, masks)
        diff = out - yb
        losses = np.mean(diff * diff, axis=(-2, -1))
        g_out = diff * (2.0 / (diff.shape[-2] * diff.shape[-1]))
        grads, _ = _backward_arrays(params[0::2], cache, g_out, act)
        g_flat = np.concatenate([g.reshape(M, -1) for g in grads], axis=1)
        (flat,), state = adam_step([flat], [g_flat], state, cfg.learning_rate,
                                   cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        return losses

    def record(epoch, losses, snap_flat, snap_state):
        if not np.all(np.isfinite(losses[active])):
            bad = int(np.flatnonzero(active & ~np.isfinite(losses))[0])
            raise NumericDivergenceError(
                f"non-finite training loss at epoch {epoch} (member {bad})", epoch=epoch, member=bad)
        improved = active & (losses < best_loss - cfg.min_delta)
        if improved.any():
            best_loss[improved] = losses[improved]
            best_flat[improved] = snap_flat[improved]
            best_m[improved] = snap_state.m[0][improved]
            best_v[improved] = snap_state.v[0][improved]
            best_t[improved] = np.asarray(snap_state.t)[improved]
        stale[improved] = 0
        stale[active & ~improved] += 1
        active[stale >= cfg.patience] = False

    for epoch in range(int(cfg.max_epochs)):
        if full:
            # loss is measured before this epoch's update, so snapshot pre-update params
            before_flat, before_state = flat, state
            losses = step(X, Y, masks_for(n))
            record(epoch, losses, before_flat, before_state)
        else:
            orders = np.stack([r.permutation(n) for r in rngs])
            for start in range(0, n, batch):
                idx = orders[:, start:start + batch]
                step(X[idx], Y[idx], masks_for(idx.shape[1]))
            params = views(flat)
            out, _ = _forward_arrays(params[0::2], params[1::2], X, act)
            losses = np.mean((out - Y) ** 2, axis=(-2, -1))
            record(epoch, losses, flat, state)
        if not active.any():
            break

    best_params = views(best_flat)
    best_m_views, best_v_views = views(best_m), views(best_v)
    results = []
    for i, m in enumerate(models):
        res = m.with_params([p[i] for p in best_params])
        res.best_loss = float(best_loss[i])
        res.optimizer_state = AdamState([a[i].copy() for a in best_m_views],
                                        [a[i].copy() for a in best_v_views], int(best_t[i]))
        results.append(res)
    return results


def train(model: MlpModel, X, y, cfg: Optional[TrainConfig] = None, rng=None) -> MlpModel:
    """Fit ``model`` by Adam on mean squared error; returns the best-loss snapshot.

    Stops after ``cfg.max_epochs`` or when the best training MSE has not
    improved by at least ``cfg.min_delta`` for ``cfg.patience`` epochs.
    The input model is left untouched. With ``cfg.warm_start`` the Adam
    moments stored on ``model`` by a previous call are resumed.
    """
    return train_stack([model], X, y, cfg, [model.seed if rng is None else rng])[0]
