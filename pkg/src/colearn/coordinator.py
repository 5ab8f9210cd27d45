"""The global server: broadcast, local rounds, parameter averaging, epoch policy.

A round broadcasts the shared model, lets every participant train for the
round's epoch count, waits for all K uploads, and averages them in participant
order. A participant that crashes or loses its upload is restarted from the
same shared model; since minibatch order comes from derived seeds, the rerun
reproduces exactly what the failed attempt would have uploaded.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import RunConfig, prepare_data
from .datasets import Dataset, Shard, partition_iid
from .errors import InvalidInputError, ParticipantFailure, RoundAbortError
from .params import ModelSpec, average, init_params, params_hash, rel_change, save_checkpoint
from .participant import EvalResult, LocalRunReport, evaluate, local_train
from .schedule import ClrSchedule, ElrSchedule, FlePolicy, IlePolicy, plan_epochs, round_rate_fn
from .seeding import INIT, PARTITION, derive_seed
from .wansim import CommRecord, WanModel, round_comm

log = logging.getLogger(__name__)

FAULT_KINDS = ("upload-loss", "crash-mid-training")


@dataclass(frozen=True)
class RoundState:
    round_index: int
    shared: np.ndarray = field(repr=False)
    prev_shared: np.ndarray | None = field(repr=False)
    epochs: int
    shared_rate: float
    # per-participant epochs completed before this round
    epoch_cum: int = 0

    def __post_init__(self):
        if self.round_index < 0:
            raise InvalidInputError("round_index must be >= 0")
        if (self.prev_shared is None) != (self.round_index == 0):
            raise InvalidInputError("prev_shared must be absent exactly in round 0")
        if self.epochs < 1:
            raise InvalidInputError("epochs must be >= 1")


@dataclass(frozen=True)
class Fault:
    round_index: int
    participant_id: int
    kind: str

    def __post_init__(self):
        if self.kind not in FAULT_KINDS:
            raise InvalidInputError(f"unknown failure kind {self.kind!r}")


@dataclass(frozen=True)
class FaultPlan:
    """Injected failures; repeating an entry makes successive attempts fail too."""

    faults: tuple[Fault, ...] = ()

    @classmethod
    def from_entries(cls, entries) -> "FaultPlan":
        return cls(tuple(f if isinstance(f, Fault) else Fault(int(f[0]), int(f[1]), str(f[2]))
                         for f in entries))

    def failures(self, round_index: int, participant_id: int) -> list[str]:
        return [f.kind for f in self.faults
                if f.round_index == round_index and f.participant_id == participant_id]

    def check(self, k: int) -> None:
        for f in self.faults:
            if not 0 <= f.participant_id < k:
                raise InvalidInputError(f"fault targets participant {f.participant_id}, K={k}")


@dataclass(frozen=True)
class ParticipantSummary:
    participant_id: int
    start_params_hash: str
    end_params_hash: str
    epochs_run: int
    minibatch_steps: int
    final_train_loss: float
    attempts: int


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    planned_epochs: int
    epochs: int
    rel_change: float
    next_epochs: int
    epoch_cum: int
    total_epochs: int
    shared_hash: str
    participants: tuple[ParticipantSummary, ...]
    comm: CommRecord
    eval: EvalResult | None


HISTORY_COLUMNS = ("round", "epoch_cum", "T_i", "rel_change", "shared_test_acc",
                   "shared_test_loss", "upload_bytes", "download_bytes", "interval_s")


@dataclass
class RunHistory:
    seed: int
    k: int
    initial_epochs: int
    initial_hash: str
    initial_eval: EvalResult | None
    rounds: list[RoundRecord] = field(default_factory=list)
    final_params: np.ndarray | None = field(default=None, repr=False)

    @property
    def epoch_cum(self) -> int:
        return self.rounds[-1].epoch_cum if self.rounds else 0

    @property
    def total_epochs(self) -> int:
        return self.rounds[-1].total_epochs if self.rounds else 0

    def rows(self) -> list[dict]:
        """One row per shared model; the initial broadcast is round -1."""
        ev = self.initial_eval
        out = [dict(round=-1, epoch_cum=0, T_i=0, rel_change=None,
                    shared_test_acc=ev.accuracy if ev else None,
                    shared_test_loss=ev.mean_loss if ev else None,
                    upload_bytes=0, download_bytes=0, interval_s=0.0)]
        for r in self.rounds:
            out.append(dict(round=r.round_index, epoch_cum=r.epoch_cum, T_i=r.epochs,
                            rel_change=r.rel_change,
                            shared_test_acc=r.eval.accuracy if r.eval else None,
                            shared_test_loss=r.eval.mean_loss if r.eval else None,
                            upload_bytes=r.comm.upload_bytes,
                            download_bytes=r.comm.download_bytes,
                            interval_s=r.comm.interval_seconds))
        return out

    def accuracy_by_epoch(self, budget: int | None = None) -> list[float]:
        """Shared-model test accuracy at every per-participant epoch 0..budget.

        The shared model only changes at round boundaries, so epochs inside a
        round carry the accuracy of the latest shared model.
        """
        if self.initial_eval is None:
            raise InvalidInputError("history has no evaluations")
        budget = self.epoch_cum if budget is None else budget
        out = []
        acc = self.initial_eval.accuracy
        it = iter(self.rounds)
        nxt = next(it, None)
        for e in range(budget + 1):
            while nxt is not None and nxt.epoch_cum <= e:
                acc = nxt.eval.accuracy
                nxt = next(it, None)
            out.append(acc)
        return out


def worker_count(default: int = 1) -> int:
    raw = os.environ.get("COLEARN_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def _train_with_restarts(shard: Shard, spec: ModelSpec, state: RoundState, epochs: int,
                         rate_fn, batch_size: int, seed: int, faults: FaultPlan,
                         max_retries: int, epoch_seconds: float) -> tuple[LocalRunReport, int]:
    injected = faults.failures(state.round_index, shard.participant_id)
    failures = 0
    while True:
        kind = injected[failures] if failures < len(injected) else None

        def crash_hook(epoch, _params, kind=kind):
            if kind == "crash-mid-training" and epoch == epochs // 2:
                raise ParticipantFailure(shard.participant_id, kind)

        try:
            report = local_train(shard, spec, state.shared, epochs, rate_fn, batch_size, seed,
                                 round_index=state.round_index, epoch_seconds=epoch_seconds,
                                 on_epoch_end=crash_hook)
            if kind == "upload-loss":
                raise ParticipantFailure(shard.participant_id, kind)
            return report, failures + 1
        except ParticipantFailure as exc:
            failures += 1
            log.info("round %d: %s; restarting", state.round_index, exc)
            if failures > max_retries:
                raise RoundAbortError(state.round_index, shard.participant_id, failures) from exc


def run_round(state: RoundState, shards: Sequence[Shard], spec: ModelSpec,
              policy: IlePolicy | FlePolicy, schedule: ClrSchedule | ElrSchedule,
              faults: FaultPlan | None, seed: int, *, batch_size: int,
              wan: WanModel | None = None, epochs_limit: int | None = None,
              eval_data: Dataset | None = None, norm: str = "l2", max_retries: int = 3,
              workers: int | None = None) -> tuple[RoundState, RoundRecord]:
    """Execute one broadcast/train/upload/average round.

    ``epochs_limit`` truncates the round when the remaining epoch budget is
    smaller than the policy's epoch count; the policy itself keeps planning
    from the untruncated value.
    """
    if len(shards) < 1:
        raise InvalidInputError("need at least one shard")
    faults = faults or FaultPlan()
    faults.check(len(shards))
    wan = wan or WanModel()
    epochs = state.epochs if epochs_limit is None else min(state.epochs, epochs_limit)
    if epochs < 1:
        raise InvalidInputError("round has no epochs left to run")
    rate_fn = round_rate_fn(schedule, epochs, state.epoch_cum)

    def job(shard):
        return _train_with_restarts(shard, spec, state, epochs, rate_fn, batch_size, seed,
                                    faults, max_retries, wan.per_epoch_seconds)

    workers = worker_count() if workers is None else workers
    if workers > 1 and len(shards) > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(shards))) as pool:
            results = list(pool.map(job, shards))
    else:
        results = [job(s) for s in shards]
    results.sort(key=lambda r: r[0].participant_id)

    start_hash = params_hash(state.shared)
    for report, _ in results:
        # barrier: every upload must descend from this round's broadcast
        if report.start_params_hash != start_hash or report.round_index != state.round_index:
            raise RuntimeError(f"participant {report.participant_id} trained from a stale model")

    new_shared = average([r.end_params for r, _ in results])
    change = rel_change(new_shared, state.shared, norm)
    next_t = plan_epochs(policy, state.round_index + 1, state.epochs, change)
    k = len(shards)
    record = RoundRecord(
        round_index=state.round_index,
        planned_epochs=state.epochs,
        epochs=epochs,
        rel_change=change,
        next_epochs=next_t,
        epoch_cum=state.epoch_cum + epochs,
        total_epochs=k * (state.epoch_cum + epochs),
        shared_hash=params_hash(new_shared),
        participants=tuple(
            ParticipantSummary(r.participant_id, r.start_params_hash, params_hash(r.end_params),
                               r.epochs_run, r.minibatch_steps, r.train_loss_per_epoch[-1], attempts)
            for r, attempts in results),
        comm=round_comm(spec, wan, k, epochs, state.round_index),
        eval=evaluate(spec, new_shared, eval_data) if eval_data is not None else None,
    )
    new_state = RoundState(state.round_index + 1, new_shared, state.shared, next_t,
                           state.shared_rate, state.epoch_cum + epochs)
    return new_state, record


def colearn(train: Dataset, test: Dataset | None, spec: ModelSpec, *, k: int,
            policy: IlePolicy | FlePolicy, schedule: ClrSchedule | ElrSchedule,
            budget: int, seed: int, batch_size: int, rounds: int | None = None,
            wan: WanModel | None = None, faults: FaultPlan | None = None, norm: str = "l2",
            max_retries: int = 3, checkpoint_dir=None, checkpoint_every: int = 0,
            workers: int | None = None) -> RunHistory:
    """Run rounds until ``rounds`` have completed or every participant has used ``budget`` epochs."""
    shards = partition_iid(train, k, derive_seed(seed, PARTITION))
    shared = init_params(spec, derive_seed(seed, INIT))
    rate = schedule.shared_rate if isinstance(schedule, ClrSchedule) else schedule.initial_rate
    state = RoundState(0, shared, None, plan_epochs(policy, 0), rate)
    history = RunHistory(seed, k, state.epochs, params_hash(shared),
                         evaluate(spec, shared, test) if test is not None else None)
    while (rounds is None or state.round_index < rounds) and state.epoch_cum < budget:
        try:
            state, record = run_round(
                state, shards, spec, policy, schedule, faults, seed, batch_size=batch_size, wan=wan,
                epochs_limit=budget - state.epoch_cum, eval_data=test, norm=norm,
                max_retries=max_retries, workers=workers)
        except RoundAbortError as exc:
            # hand the completed rounds to the caller so partial artifacts can be written
            history.final_params = state.shared
            exc.history = history
            raise
        history.rounds.append(record)
        log.debug("round %d: T=%d change=%.3g acc=%s", record.round_index, record.epochs,
                  record.rel_change, record.eval and record.eval.accuracy)
        if checkpoint_dir is not None and checkpoint_every and state.round_index % checkpoint_every == 0:
            save_checkpoint(Path(checkpoint_dir) / f"round_{state.round_index:04d}.ckpt", state.shared)
    history.final_params = state.shared
    return history


def run_colearning(config: RunConfig, seed: int | None = None,
                   data: tuple[Dataset, Dataset] | None = None, *, rate: str | None = None,
                   epoch_policy: str | None = None, checkpoint_dir=None) -> RunHistory:
    """Co-learning as described by ``config`` for one seed (default: its first seed)."""
    seed = config.seeds[0] if seed is None else seed
    train, test = data if data is not None else prepare_data(config, seed)
    spec = config.model_spec(train.input_dim, train.class_count)
    return colearn(
        train, test, spec, k=config.K,
        policy=config.epoch_schedule(epoch_policy), schedule=config.rate_schedule(rate),
        budget=config.budget, seed=seed, batch_size=config.batch_size, rounds=config.rounds,
        wan=config.wan(), faults=FaultPlan.from_entries(config.faults), norm=config.norm,
        max_retries=config.max_retries, checkpoint_dir=checkpoint_dir,
        checkpoint_every=config.checkpoint_every)
