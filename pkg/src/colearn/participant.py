"""One data center's local training for a single round."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .datasets import Dataset, Shard
from .errors import InvalidInputError
from .params import ModelSpec, _check_batch, _loss_and_gradient, as_params, empirical_loss, forward, params_hash, sgd_step
from .seeding import epoch_rng


@dataclass(frozen=True)
class LocalRunReport:
    participant_id: int
    round_index: int
    start_params_hash: str
    end_params: np.ndarray = field(repr=False)
    epochs_run: int
    minibatch_steps: int
    train_loss_per_epoch: tuple[float, ...]
    wall_epoch_cost: float = 0.0


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    mean_loss: float


def local_train(shard: Shard, spec: ModelSpec, start, epochs: int,
                rate_fn: Callable[[int], float], batch_size: int, seed: int, *,
                round_index: int = 0, epoch_seconds: float = 0.0,
                on_epoch_end: Callable[[int, np.ndarray], None] | None = None) -> LocalRunReport:
    """Run ``epochs`` passes of minibatch SGD over the shard from ``start``.

    Each epoch reshuffles with a seed derived from (seed, participant, round,
    epoch) and keeps the final short minibatch. ``rate_fn`` receives the 0-based
    epoch index. ``on_epoch_end(epoch, params)`` is called after each epoch and
    may raise to abort the run.
    """
    if epochs < 1:
        raise InvalidInputError("epochs must be >= 1")
    if batch_size < 1:
        raise InvalidInputError("batch_size must be >= 1")
    data = shard.data
    if len(data) == 0:
        raise InvalidInputError("empty shard")
    _check_batch(spec, data)
    params = as_params(spec, start).copy()
    start_hash = params_hash(params)
    x, y = data.features, data.labels
    n = len(data)
    steps = 0
    losses = []
    for epoch in range(epochs):
        lr = rate_fn(epoch)
        if not lr > 0:
            raise InvalidInputError(f"non-positive learning rate {lr} at epoch {epoch}")
        order = epoch_rng(seed, shard.participant_id, round_index, epoch).permutation(n)
        total = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            loss, grad = _loss_and_gradient(spec, params, x[idx], y[idx])
            params = sgd_step(params, grad, lr)
            total += loss * len(idx)
            steps += 1
        losses.append(total / n)
        if on_epoch_end is not None:
            on_epoch_end(epoch, params)
    return LocalRunReport(
        participant_id=shard.participant_id,
        round_index=round_index,
        start_params_hash=start_hash,
        end_params=params,
        epochs_run=epochs,
        minibatch_steps=steps,
        train_loss_per_epoch=tuple(losses),
        wall_epoch_cost=epoch_seconds,
    )


def predict(probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(probs, axis=1)


def evaluate(spec: ModelSpec, params, data: Dataset) -> EvalResult:
    if len(data) == 0:
        raise InvalidInputError("empty evaluation set")
    probs = forward(spec, params, data.features)
    acc = float(np.mean(predict(probs) == data.labels))
    return EvalResult(acc, empirical_loss(spec, params, data))
