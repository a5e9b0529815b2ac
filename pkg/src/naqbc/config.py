"""INI run configuration: parsing, validation and canonical serialisation."""
from __future__ import annotations

import configparser
import io
import os
import re
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Tuple

from .exceptions import ConfigurationError
from .harness import METHODS, POOL_METHODS, TrialSettings, check_method_gamma
from .metrics import DEFAULT_GAMMAS
from .nn import ACTIVATIONS, BIAS_INITS, WEIGHT_INITS, TrainConfig
from .oracles import DatasetOracle, get_problem, registry_defaults
from .synthesis import SynthesisConfig

OUTPUT_ROOT_ENV = "NAQBC_OUTPUT_ROOT"


def parse_seeds(text) -> Tuple[int, ...]:
    """``"0..4"`` (inclusive), ``"1,3,5"`` or a mix such as ``"0..2,7"``."""
    if isinstance(text, (list, tuple)):
        return tuple(int(s) for s in text)
    seeds = []
    for part in str(text).replace(" ", "").split(","):
        if not part:
            continue
        m = re.fullmatch(r"(\d+)\.\.(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ConfigurationError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        elif re.fullmatch(r"\d+", part):
            seeds.append(int(part))
        else:
            raise ConfigurationError(f"bad seed token {part!r}")
    if not seeds:
        raise ConfigurationError("no seeds given")
    if len(set(seeds)) != len(seeds):
        raise ConfigurationError("duplicate seeds")
    return tuple(seeds)


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)


def _str_list(text):
    if isinstance(text, (list, tuple)):
        return tuple(str(v) for v in text)
    return tuple(v for v in str(text).replace(" ", "").split(",") if v)


def _opt_int(text):
    return None if text in (None, "", "none", "None") else int(text)


def _opt_float(text):
    return None if text in (None, "", "none", "None") else float(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _batch(text):
    v = str(text).strip().lower()
    return v if v in ("auto", "full") else int(v)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


# field name -> (section, parser)
_SCHEMA = {
    "problem": ("run", str),
    "method": ("run", str),
    "gamma": ("run", _opt_int),
    "seeds": ("run", parse_seeds),
    "budget_steps": ("run", int),
    "output_dir": ("run", str),
    "workers": ("run", int),
    "consecutive_hits": ("run", _bool),
    "record_wall_time": ("run", _bool),
    "test_seed": ("run", int),
    "n_0": ("problem", _opt_int),
    "k": ("problem", _opt_int),
    "e_star": ("problem", _opt_float),
    "hidden": ("problem", _int_list),
    "n_ens": ("problem", _opt_int),
    "n_test": ("problem", _opt_int),
    "dataset_path": ("dataset", str),
    "dataset_inputs": ("dataset", _str_list),
    "dataset_outputs": ("dataset", _str_list),
    "dataset_neighbors": ("dataset", int),
    "learning_rate": ("training", float),
    "max_epochs": ("training", int),
    "patience": ("training", int),
    "batch_size": ("training", _batch),
    "warm_start": ("training", _bool),
    "activation": ("training", str),
    "weight_init": ("training", str),
    "bias_init": ("training", str),
    "dropout_rate": ("training", float),
    "bald_passes": ("training", int),
    "synthesis_steps": ("synthesis", int),
    "synthesis_learning_rate": ("synthesis", float),
    "boundary_strength": ("synthesis", float),
    "gammas": ("sweep", _int_list),
    "sweep_methods": ("sweep", _str_list),
    "gamma_statistic": ("sweep", str),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce a run or sweep.

    Problem constants left empty fall back to the registry entry of
    ``problem``; an empty ``hidden`` means the registry architecture.
    """

    problem: str = "sine"
    method: str = "na_qbc"
    gamma: Optional[int] = None
    seeds: tuple = (0,)
    budget_steps: int = 200
    output_dir: str = ""
    workers: int = 1
    consecutive_hits: bool = False
    record_wall_time: bool = False
    test_seed: int = 0
    n_0: Optional[int] = None
    k: Optional[int] = None
    e_star: Optional[float] = None
    hidden: tuple = ()
    n_ens: Optional[int] = None
    n_test: Optional[int] = None
    dataset_path: str = ""
    dataset_inputs: tuple = ()
    dataset_outputs: tuple = ()
    dataset_neighbors: int = 5
    learning_rate: float = 1e-3
    max_epochs: int = 500
    patience: int = 20
    batch_size: object = "auto"
    warm_start: bool = False
    activation: str = "relu"
    weight_init: str = "fan_in"
    bias_init: str = "zero"
    dropout_rate: float = 0.1
    bald_passes: int = 25
    synthesis_steps: int = 300
    synthesis_learning_rate: float = 0.01
    boundary_strength: float = 1.0
    gammas: tuple = DEFAULT_GAMMAS
    sweep_methods: tuple = POOL_METHODS + ("na_qbc",)
    gamma_statistic: str = "mean"

    # -- serialisation -------------------------------------------------
    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        kwargs = {}
        for key, raw in values.items():
            if key not in _SCHEMA:
                raise ConfigurationError(f"unknown configuration key {key!r}")
            try:
                kwargs[key] = _SCHEMA[key][1](raw) if raw is not None else None
            except (TypeError, ValueError) as err:
                raise ConfigurationError(f"bad value for {key!r}: {raw!r} ({err})") from None
        cfg = cls(**kwargs)
        return cfg

    @classmethod
    def from_ini(cls, text: str) -> "RunConfig":
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as err:
            raise ConfigurationError(f"cannot parse configuration: {err}") from None
        values = {}
        for section in cp.sections():
            for key, raw in cp.items(section):
                if key not in _SCHEMA:
                    raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
                if _SCHEMA[key][0] != section:
                    raise ConfigurationError(
                        f"key {key!r} belongs in [{_SCHEMA[key][0]}], not [{section}]")
                values[key] = raw
        return cls.from_mapping(values)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_ini(fh.read())

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for f in fields(self):
            section = _SCHEMA[f.name][0]
            if not cp.has_section(section):
                cp.add_section(section)
            cp.set(section, f.name, _fmt(getattr(self, f.name)))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def with_updates(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    # -- derived objects -----------------------------------------------
    def resolved_output_dir(self) -> str:
        if self.output_dir:
            return self.output_dir
        return os.environ.get(OUTPUT_ROOT_ENV, "naqbc_output")

    def build_problem(self):
        dataset = None
        if self.dataset_path:
            if not self.dataset_inputs or not self.dataset_outputs:
                raise ConfigurationError("dataset needs both input and output columns")
            dataset = DatasetOracle.from_file(self.dataset_path, self.dataset_inputs,
                                              self.dataset_outputs,
                                              neighbors=self.dataset_neighbors)
        return get_problem(self.problem, dataset, n_0=self.n_0, k=self.k, e_star=self.e_star,
                           hidden=self.hidden or None, n_ens=self.n_ens, n_test=self.n_test)

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, max_epochs=self.max_epochs,
                           patience=self.patience, batch_size=self.batch_size,
                           warm_start=self.warm_start)

    def trial_settings(self) -> TrialSettings:
        return TrialSettings(
            train=self.train_config(),
            synthesis=SynthesisConfig(self.synthesis_steps, self.synthesis_learning_rate,
                                      self.boundary_strength),
            activation=self.activation, weight_init=self.weight_init,
            bias_init=self.bias_init, dropout_rate=self.dropout_rate,
            bald_passes=self.bald_passes, consecutive_hits=self.consecutive_hits,
            record_wall_time=self.record_wall_time, test_seed=self.test_seed)

    def validate(self, mode: str = "run"):
        """Check every field; returns the resolved problem. Raises on the first error."""
        registry_defaults(self.problem)
        if mode == "run":
            check_method_gamma(self.method, self.gamma)
        elif mode == "sweep":
            bad = [m for m in self.sweep_methods if m not in METHODS or m == "random"]
            if bad or not self.sweep_methods:
                raise ConfigurationError(f"invalid sweep methods: {bad or 'none given'}")
            if not self.gammas or any(g < 1 for g in self.gammas):
                raise ConfigurationError("sweep gammas must be positive integers")
            if len(set(self.gammas)) != len(self.gammas):
                raise ConfigurationError("duplicate sweep gammas")
        if self.budget_steps < 1:
            raise ConfigurationError("budget_steps must be at least 1")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {ACTIVATIONS}")
        if self.weight_init not in WEIGHT_INITS or self.bias_init not in BIAS_INITS:
            raise ConfigurationError("unknown weight or bias initialisation")
        if not 0.0 < self.dropout_rate < 1.0:
            raise ConfigurationError("dropout_rate must lie in (0, 1)")
        if self.bald_passes < 2:
            raise ConfigurationError("bald_passes must be at least 2")
        if self.gamma_statistic not in ("mean", "median"):
            raise ConfigurationError("gamma_statistic must be mean or median")
        if any(h < 1 for h in self.hidden):
            raise ConfigurationError("hidden widths must be positive")
        self.trial_settings()
        return self.build_problem()
