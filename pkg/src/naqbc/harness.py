"""Active-learning trials: pool-based selection, query synthesis and the random baseline."""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import acquisition as acq
from .ensemble import ModelSpec, train_committee
from .exceptions import ConfigurationError, NumericDivergenceError
from .nn import TrainConfig, train
from .oracles import Problem, make_test_set
from .synthesis import SynthesisConfig, synthesize_queries
from .utils import derive_seed, make_rng

POOL_METHODS = acq.METHODS
METHODS = ("random",) + POOL_METHODS + ("na_qbc",)
STEP_LOG_COLUMNS = ("run_id", "step", "train_size", "test_mse", "hit", "cumulative_hits", "seconds")
HITS_TO_STOP = 5


@dataclass(frozen=True)
class TrialSettings:
    """Knobs shared by every trial of an experiment.

    ``warm_start=False`` retrains every committee from a fresh initialisation
    drawn from ``(seed, step)``; ``True`` carries weights and Adam moments
    from one step to the next.
    """

    train: TrainConfig = field(default_factory=TrainConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    activation: str = "relu"
    weight_init: str = "fan_in"
    bias_init: str = "zero"
    dropout_rate: float = 0.1
    bald_passes: int = 25
    consecutive_hits: bool = False
    hits_to_stop: int = HITS_TO_STOP
    record_wall_time: bool = False
    test_seed: int = 0

    def model_spec(self, problem: Problem, dropout_rate: float = 0.0) -> ModelSpec:
        return ModelSpec(problem.widths, self.activation, self.weight_init,
                         self.bias_init, dropout_rate)


@dataclass(frozen=True)
class StepRecord:
    step: int
    train_size: int
    test_mse: float
    hit: bool
    cumulative_hits: int
    wall_time: float
    member_mse: tuple = ()


@dataclass
class ActiveRun:
    problem: Problem
    method: str
    gamma: Optional[int]
    seed: int
    X: np.ndarray
    Y: np.ndarray
    step_log: list = field(default_factory=list)
    status: str = "running"
    failed_step: Optional[int] = None
    error: Optional[str] = None

    @property
    def run_id(self) -> str:
        g = "-" if self.gamma is None else str(self.gamma)
        return f"{self.problem.name}_{self.method}_g{g}_s{self.seed}"

    @property
    def train_size(self) -> int:
        return self.X.shape[0]


def check_method_gamma(method: str, gamma) -> Optional[int]:
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}; known: {', '.join(METHODS)}")
    if method in POOL_METHODS:
        if gamma is None or int(gamma) < 1:
            raise ConfigurationError(f"method {method!r} needs a pool ratio gamma >= 1")
        return int(gamma)
    if gamma is not None:
        raise ConfigurationError(f"method {method!r} takes no pool ratio")
    return None


def evaluate_mse(committee, X_test, Y_test) -> float:
    """Mean squared error of the committee mean over rows and outputs."""
    mu = committee.mean_prediction(np.asarray(X_test, dtype=np.float64))
    return float(np.mean((mu - np.asarray(Y_test, dtype=np.float64).reshape(mu.shape)) ** 2))


def initial_design(problem: Problem, seed) -> tuple:
    """``T^0``: drawn from the trial seed only, so every method starts alike."""
    X = problem.domain.sample(problem.n_0, make_rng(seed, "initial-design", problem.name))
    return X, problem.label(X)


def format_step_row(run_id: str, rec: StepRecord, record_wall_time: bool) -> str:
    seconds = f"{rec.wall_time:.3f}" if record_wall_time else "0"
    return (f"{run_id},{rec.step},{rec.train_size},{rec.test_mse!r},{int(rec.hit)},"
            f"{rec.cumulative_hits},{seconds}\n")


def run_trial(problem: Problem, method: str, gamma=None, seed: int = 0,
              budget_steps: int = 200, settings: Optional[TrialSettings] = None,
              test_set: Optional[tuple] = None, log_path=None, progress=None) -> ActiveRun:
    """Run one trial until the stopping rule fires or the step budget is spent.

    Each step trains on the current labelled set, evaluates the test MSE,
    updates the hit counter and, unless stopped, acquires ``problem.k`` new
    labels. The run stops once ``settings.hits_to_stop`` hits are counted; its
    annotation burden is the training-set size at that step. Divergence marks
    the run ``failed`` instead of raising.

    ``log_path`` receives the step log as it grows (header plus one row per
    step); ``progress`` is called with each :class:`StepRecord`.
    """
    settings = settings or TrialSettings()
    gamma = check_method_gamma(method, gamma)
    if int(budget_steps) < 1:
        raise ConfigurationError("budget_steps must be at least 1")
    if test_set is None:
        test_set = make_test_set(problem, settings.test_seed)
    X_test, Y_test = test_set
    X, Y = initial_design(problem, seed)
    run = ActiveRun(problem, method, gamma, int(seed), X, Y)
    spec = settings.model_spec(problem)
    cfg = settings.train
    log = open(log_path, "w", newline="") if log_path is not None else None
    if log:
        log.write(",".join(STEP_LOG_COLUMNS) + "\n")
        log.flush()
    committee = None
    dropout_net = None
    hits = 0
    try:
        for step in range(int(budget_steps)):
            t0 = time.perf_counter()
            try:
                base = derive_seed(seed, "committee") if cfg.warm_start \
                    else derive_seed(seed, "committee", step)
                committee = train_committee(spec, run.X, run.Y, cfg, base_seed=base,
                                            n_members=problem.n_ens, previous=committee)
                if method == "bald":
                    dropout_net = _train_dropout_net(problem, settings, run, step, dropout_net)
            except NumericDivergenceError as err:
                run.status, run.failed_step, run.error = "failed", step, str(err)
                break
            preds = committee.member_predictions(X_test)
            mse = float(np.mean((preds.mean(axis=0) - Y_test) ** 2))
            member_mse = tuple(float(v) for v in np.mean((preds - Y_test) ** 2, axis=(1, 2)))
            hit = bool(mse <= problem.e_star)
            hits = hits + 1 if hit else (0 if settings.consecutive_hits else hits)
            done = hits >= settings.hits_to_stop
            if not done and step + 1 < budget_steps:
                try:
                    X_new = _acquire(problem, method, gamma, seed, step, committee,
                                     dropout_net, run.X, settings)
                except NumericDivergenceError as err:
                    run.status, run.failed_step, run.error = "failed", step, str(err)
                    X_new = None
            rec = StepRecord(step, run.train_size, mse, hit, hits,
                             time.perf_counter() - t0, member_mse)
            run.step_log.append(rec)
            if log:
                log.write(format_step_row(run.run_id, rec, settings.record_wall_time))
                log.flush()
            if progress is not None:
                progress(rec)
            if done:
                run.status = "stopped_at_target"
                break
            if run.status == "failed":
                break
            if step + 1 >= budget_steps:
                run.status = "exhausted_budget"
                break
            run.X = np.vstack([run.X, X_new])
            run.Y = np.vstack([run.Y, problem.label(X_new)])
    finally:
        if log:
            log.close()
    return run


def _train_dropout_net(problem, settings, run, step, previous):
    spec = settings.model_spec(problem, settings.dropout_rate)
    cfg = settings.train
    seed = derive_seed(run.seed, "dropout-net") if cfg.warm_start \
        else derive_seed(run.seed, "dropout-net", step)
    model = previous if (cfg.warm_start and previous is not None) else spec.build(seed)
    try:
        return train(model, run.X, run.Y, cfg, rng=derive_seed(seed, "shuffle", run.train_size))
    except NumericDivergenceError as err:
        raise NumericDivergenceError(f"dropout network diverged: {err}", epoch=err.epoch) from err


def _acquire(problem, method, gamma, seed, step, committee, dropout_net, train_X, settings):
    rng = make_rng(seed, method, "acquire", step)
    k = problem.k
    if method == "random":
        return problem.domain.sample(k, rng)
    if method == "na_qbc":
        return synthesize_queries(committee, problem.domain, k, settings.synthesis, rng).queries
    pool = acq.sample_pool(problem.domain, gamma, k, rng)
    if method == "qbc":
        idx = acq.select_qbc(committee, pool, k)
    elif method == "div_qbc":
        idx = acq.select_div_qbc(committee, pool, k)
    elif method == "dendiv_qbc":
        idx = acq.select_dendiv_qbc(committee, pool, k)
    elif method == "bald":
        idx = acq.select_bald_mcdropout(dropout_net, pool, k, settings.bald_passes, rng)
    else:
        idx = acq.select_coreset(train_X, pool, k)
    return pool.candidates[idx]


def with_problem_defaults(settings: TrialSettings, **train_overrides) -> TrialSettings:
    """Copy of ``settings`` with some :class:`TrainConfig` fields replaced."""
    return replace(settings, train=replace(settings.train, **train_overrides))
