"""Run configuration: a flat YAML mapping of named settings plus ``key=value`` overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .datasets import CsvSchema, Dataset, gen_gaussian_blobs, gen_xor_rings, load_csv, train_test_split
from .errors import ConfigError, DatasetLoadError, InvalidInputError
from .params import ModelSpec
from .schedule import DECAY, DEFAULT_EPSILON, SHARED_RATE, ClrSchedule, ElrSchedule, FlePolicy, IlePolicy
from .wansim import WanModel

MODES = ("colearn", "vanilla", "ensemble", "ablate")
RATES = ("clr", "elr")
EPOCH_POLICIES = ("ile", "fle")
REQUIRED = ("dataset",)


@dataclass
class RunConfig:
    dataset: str
    mode: str = "colearn"
    # dataset generation / loading
    n: int = 2000
    n_test: int = 1000
    dims: int = 2
    classes: int = 2
    separation: float = 3.0
    noise: float = 0.0
    rings: int = 3
    csv_label_column: int = -1
    csv_header: bool = False
    data_seed: int | None = None
    # participants and model
    K: int = 5
    model: str = "logistic"
    hidden: list[int] = field(default_factory=lambda: [16, 16])
    activation: str = "relu"
    # strategy
    rate: str = "clr"
    epoch_policy: str = "ile"
    T0: int = 5
    epsilon: float = DEFAULT_EPSILON
    cap: int | None = None
    eta: float = SHARED_RATE
    r: float = DECAY
    batch_size: int = 32
    budget: int = 100
    rounds: int | None = None
    norm: str = "l2"
    max_retries: int = 3
    faults: list = field(default_factory=list)
    # accounting and output
    bandwidth: float = 12.5e6
    per_epoch_seconds: float = 60.0
    wire_bytes_per_param: int = 4
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    out: str = "runs"
    checkpoint_every: int = 0

    def validate(self) -> "RunConfig":
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(self.mode in MODES, "mode", f"must be one of {MODES}")
        need(isinstance(self.dataset, str) and self.dataset, "dataset", "must be blobs, xor-rings or a CSV path")
        if self.dataset not in ("blobs", "xor-rings"):
            need(Path(self.dataset).suffix.lower() == ".csv", "dataset",
                 "must be blobs, xor-rings or a path ending in .csv")
        need(self.n >= 1, "n", "must be >= 1")
        need(self.n_test >= 1, "n_test", "must be >= 1")
        need(self.dims >= 1, "dims", "must be >= 1")
        need(self.classes >= 2, "classes", "must be >= 2")
        need(self.separation > 0, "separation", "must be positive")
        need(self.noise >= 0, "noise", "must be non-negative")
        need(self.rings >= 1, "rings", "must be >= 1")
        need(self.K >= 1, "K", "must be >= 1")
        need(self.model in ("logistic", "mlp"), "model", "must be logistic or mlp")
        need(all(int(h) >= 1 for h in self.hidden), "hidden", "widths must be >= 1")
        need(self.activation in ("relu", "tanh"), "activation", "must be relu or tanh")
        need(self.rate in RATES, "rate", f"must be one of {RATES}")
        need(self.epoch_policy in EPOCH_POLICIES, "epoch_policy", f"must be one of {EPOCH_POLICIES}")
        need(self.T0 >= 1, "T0", "must be >= 1")
        need(0 < self.epsilon < 1, "epsilon", "must lie in (0, 1)")
        need(self.cap is None or self.cap >= self.T0, "cap", "must be >= T0")
        need(self.eta > 0, "eta", "must be positive")
        need(0 < self.r < 1, "r", "must lie in (0, 1)")
        need(self.batch_size >= 1, "batch_size", "must be >= 1")
        need(self.budget >= 0, "budget", "must be >= 0")
        need(self.mode in ("vanilla", "ensemble") or self.budget == 0 or self.budget >= self.T0,
             "budget", "must be >= T0")
        need(self.rounds is None or self.rounds >= 0, "rounds", "must be >= 0")
        need(self.norm in ("l2", "linf"), "norm", "must be l2 or linf")
        need(self.max_retries >= 0, "max_retries", "must be >= 0")
        need(self.bandwidth > 0, "bandwidth", "must be positive")
        need(self.per_epoch_seconds > 0, "per_epoch_seconds", "must be positive")
        need(self.wire_bytes_per_param >= 1, "wire_bytes_per_param", "must be >= 1")
        need(len(self.seeds) >= 1, "seeds", "need at least one seed")
        need(self.checkpoint_every >= 0, "checkpoint_every", "must be >= 0")
        for f in self.faults:
            need(isinstance(f, (list, tuple)) and len(f) == 3, "faults",
                 "entries are [round, participant, kind]")
            need(0 <= int(f[1]) < self.K, "faults", f"participant {f[1]} not in [0, {self.K})")
            need(f[2] in ("upload-loss", "crash-mid-training"), "faults", f"unknown kind {f[2]!r}")
        return self

    # -- derived objects --------------------------------------------------

    def model_spec(self, input_dim: int, classes: int) -> ModelSpec:
        if self.model == "logistic":
            return ModelSpec.logistic(input_dim, classes)
        return ModelSpec.mlp(input_dim, [int(h) for h in self.hidden], classes, self.activation)

    def rate_schedule(self, rate: str | None = None):
        if (rate or self.rate) == "clr":
            return ClrSchedule(self.eta, self.r)
        return ElrSchedule(self.eta, self.r, max(self.budget, 1))

    def epoch_schedule(self, policy: str | None = None):
        if (policy or self.epoch_policy) == "ile":
            return IlePolicy(self.T0, self.epsilon, self.cap)
        return FlePolicy(self.T0)

    def wan(self) -> WanModel:
        return WanModel(self.bandwidth, self.per_epoch_seconds, self.wire_bytes_per_param)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value):
    kind = FIELDS[name].type
    if value is None:
        if "None" in kind:
            return None
        raise ConfigError(name, "must not be empty")
    try:
        if kind == "int" or kind == "int | None":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
        if kind == "str":
            return str(value)
        if kind == "list[int]":
            if isinstance(value, int):
                return [value]
            return [int(v) for v in value]
        if kind == "list":
            return list(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"cannot interpret {value!r} as {kind}") from None
    return value


def config_from_mapping(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config", "expected a mapping of key: value")
    unknown = sorted(set(raw) - set(FIELDS))
    if unknown:
        raise ConfigError(unknown[0], "unknown setting")
    for name in REQUIRED:
        if raw.get(name) in (None, ""):
            raise ConfigError(name, "missing required field")
    values = {k: _coerce(k, v) for k, v in raw.items()}
    return RunConfig(**values).validate()


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(item, "override must look like key=value")
    key, _, text = item.partition("=")
    key = key.strip()
    return key, yaml.safe_load(text) if text.strip() else None


def load_config(path=None, overrides=()) -> RunConfig:
    raw: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("config", str(exc)) from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("config", f"cannot parse {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config", "expected a mapping of key: value")
    for item in overrides:
        key, value = parse_override(item)
        raw[key] = value
    return config_from_mapping(raw)


def prepare_data(config: RunConfig, seed: int) -> tuple[Dataset, Dataset]:
    """Build the (train, test) pair for one seed."""
    data_seed = seed if config.data_seed is None else config.data_seed
    total = config.n + config.n_test
    try:
        if config.dataset == "blobs":
            data = gen_gaussian_blobs(data_seed, total, config.dims, config.classes, config.separation)
        elif config.dataset == "xor-rings":
            data = gen_xor_rings(data_seed, total, config.noise, config.rings)
        else:
            data = load_csv(config.dataset, CsvSchema(config.classes, config.csv_label_column,
                                                      header=config.csv_header))
            total = len(data)
        n_test = min(config.n_test, total - 1) if total > 1 else 0
        if n_test < 1:
            raise InvalidInputError("dataset too small for a held-out split")
        return train_test_split(data, n_test, data_seed + 1)
    except (InvalidInputError, DatasetLoadError) as exc:
        raise ConfigError("dataset", str(exc)) from exc
