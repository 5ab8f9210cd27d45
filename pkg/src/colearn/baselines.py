"""Comparison modes: centralized vanilla training and output-averaging ensembles."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .datasets import Dataset, Shard
from .errors import InvalidInputError
from .params import ModelSpec, as_params, forward, init_params, rel_change
from .participant import EvalResult, evaluate, local_train, predict
from .schedule import ElrSchedule, elr_rate
from .seeding import INIT, derive_seed


@dataclass
class VanillaHistory:
    # evaluations[e] is the model after e epochs (index 0 = initial params)
    evaluations: list[EvalResult] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    rel_changes: list[float] = field(default_factory=list)


def run_vanilla(data: Dataset, spec: ModelSpec, schedule: ElrSchedule, epochs: int,
                batch_size: int, seed: int, eval_data: Dataset | None = None,
                start=None) -> tuple[np.ndarray, VanillaHistory]:
    """Single-site minibatch SGD on the pooled data with the exponential schedule."""
    if epochs < 0:
        raise InvalidInputError("epochs must be >= 0")
    params = init_params(spec, derive_seed(seed, INIT)) if start is None else as_params(spec, start).copy()
    hist = VanillaHistory()
    if eval_data is not None:
        hist.evaluations.append(evaluate(spec, params, eval_data))
    if epochs == 0:
        return params, hist
    prev = [params]

    def after_epoch(_epoch, p):
        hist.rel_changes.append(rel_change(p, prev[0]) if np.any(prev[0]) else float("nan"))
        prev[0] = p
        if eval_data is not None:
            hist.evaluations.append(evaluate(spec, p, eval_data))

    report = local_train(Shard(0, data), spec, params, epochs,
                         lambda e: elr_rate(schedule, e), batch_size, seed,
                         on_epoch_end=after_epoch)
    hist.train_loss = list(report.train_loss_per_epoch)
    return report.end_params, hist


@dataclass(frozen=True)
class EnsembleModel:
    spec: ModelSpec
    members: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.members:
            raise InvalidInputError("ensemble needs at least one member")
        object.__setattr__(self, "members", tuple(as_params(self.spec, m) for m in self.members))


def ensemble_train(shards: Sequence[Shard], spec: ModelSpec, schedule: ElrSchedule,
                   epochs: int, batch_size: int, seed: int,
                   member_seeds: Sequence[int] | None = None) -> EnsembleModel:
    """Train each shard's model independently from the shared initialization.

    Member ``k`` draws its minibatch order from ``member_seeds[k]`` alone when
    given, otherwise from ``seed`` and the shard's participant id.
    """
    if len(shards) < 1:
        raise InvalidInputError("need at least one shard")
    if member_seeds is not None and len(member_seeds) != len(shards):
        raise InvalidInputError("one member seed per shard")
    start = init_params(spec, derive_seed(seed, INIT))
    members = []
    for i, shard in enumerate(shards):
        if epochs == 0:
            members.append(start.copy())
            continue
        if member_seeds is not None:
            # an explicit member seed fixes the whole data-order stream on its own
            shard, s = replace(shard, participant_id=0), member_seeds[i]
        else:
            s = seed
        report = local_train(shard, spec, start, epochs, lambda e: elr_rate(schedule, e),
                             batch_size, s)
        members.append(report.end_params)
    return EnsembleModel(spec, tuple(members))


def ensemble_predict(e: EnsembleModel, features) -> np.ndarray:
    """Mean of the members' softmax outputs."""
    total = None
    for m in e.members:
        p = forward(e.spec, m, features)
        total = p if total is None else total + p
    return total / len(e.members)


def ensemble_evaluate(e: EnsembleModel, data: Dataset) -> EvalResult:
    if len(data) == 0:
        raise InvalidInputError("empty evaluation set")
    probs = ensemble_predict(e, data.features)
    acc = float(np.mean(predict(probs) == data.labels))
    p_true = np.clip(probs[np.arange(len(data)), data.labels], 1e-300, None)
    return EvalResult(acc, float(-np.mean(np.log(p_true))))
