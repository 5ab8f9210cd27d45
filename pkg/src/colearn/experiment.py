"""Experiment drivers behind the CLI: single runs, the 2x2 ablation, partitioning.

Every run writes into its own directory:

    history.csv   one row per shared model (schema: HISTORY_COLUMNS)
    summary.json  configuration, seed and final metrics
    final.ckpt    final parameters in the checkpoint format
"""

from __future__ import annotations

import csv
import json
import logging
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import ensemble_evaluate, ensemble_train, run_vanilla
from .config import RunConfig, prepare_data
from .coordinator import HISTORY_COLUMNS, RunHistory, run_colearning
from .datasets import partition_iid, save_csv
from .errors import RoundAbortError
from .params import save_checkpoint
from .participant import evaluate
from .seeding import PARTITION, derive_seed

log = logging.getLogger(__name__)

SERIES = (("clr", "ile"), ("clr", "fle"), ("elr", "ile"), ("elr", "fle"))

_INT_COLUMNS = {"round", "epoch_cum", "T_i", "upload_bytes", "download_bytes"}


def series_label(rate: str, policy: str) -> str:
    return f"{rate.upper()}+{policy.upper()}"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_history_csv(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in HISTORY_COLUMNS])


def read_history_csv(path) -> list[dict]:
    out = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HISTORY_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            out.append({k: None if v == "" else int(v) if k in _INT_COLUMNS else float(v)
                        for k, v in row.items()})
    return out


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def vanilla_rows(hist, per_epoch_seconds: float) -> list[dict]:
    rows = []
    for e, ev in enumerate(hist.evaluations):
        rows.append(dict(round=e - 1, epoch_cum=e, T_i=0 if e == 0 else 1,
                         rel_change=None if e == 0 else hist.rel_changes[e - 1],
                         shared_test_acc=ev.accuracy, shared_test_loss=ev.mean_loss,
                         upload_bytes=0, download_bytes=0,
                         interval_s=0.0 if e == 0 else per_epoch_seconds))
    return rows


@dataclass
class RunResult:
    seed: int
    mode: str
    final_accuracy: float
    final_loss: float
    out_dir: Path | None = None
    history: RunHistory | None = field(default=None, repr=False)
    rows: list[dict] = field(default_factory=list, repr=False)
    extra: dict = field(default_factory=dict)


def run_single(config: RunConfig, seed: int, out_dir=None, mode: str | None = None,
               rate: str | None = None, epoch_policy: str | None = None) -> RunResult:
    """Execute one (mode, seed) run and write its artifacts when ``out_dir`` is given."""
    mode = mode or config.mode
    train, test = prepare_data(config, seed)
    spec = config.model_spec(train.input_dim, train.class_count)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    summary = dict(mode=mode, seed=seed, config=config.to_dict(), param_count=spec.param_count,
                   budget_parity=dict(vanilla_epochs=config.budget,
                                      participant_epochs=config.budget))

    if mode == "colearn":
        try:
            history = run_colearning(config, seed, (train, test), rate=rate,
                                     epoch_policy=epoch_policy, checkpoint_dir=out)
        except RoundAbortError as exc:
            if out is not None and getattr(exc, "history", None) is not None:
                write_history_csv(out / "history.csv", exc.history.rows())
                _write_json(out / "summary.json", {**summary, "aborted": str(exc)})
            raise
        rows = history.rows()
        final = rows[-1]
        result = RunResult(seed, mode, final["shared_test_acc"], final["shared_test_loss"],
                           out, history, rows)
        result.extra = dict(rounds=len(history.rounds), epoch_cum=history.epoch_cum,
                            total_epochs=history.total_epochs,
                            total_bytes=sum(r["upload_bytes"] + r["download_bytes"] for r in rows),
                            epochs_per_round=[r.epochs for r in history.rounds],
                            rate=rate or config.rate, epoch_policy=epoch_policy or config.epoch_policy)
        params = [history.final_params]
    elif mode == "vanilla":
        final_params, hist = run_vanilla(train, spec, config.rate_schedule("elr"), config.budget,
                                         config.batch_size, seed, eval_data=test)
        rows = vanilla_rows(hist, config.per_epoch_seconds)
        ev = hist.evaluations[-1]
        result = RunResult(seed, mode, ev.accuracy, ev.mean_loss, out, None, rows)
        result.extra = dict(epochs=config.budget)
        params = [final_params]
    elif mode == "ensemble":
        shards = partition_iid(train, config.K, derive_seed(seed, PARTITION))
        ens = ensemble_train(shards, spec, config.rate_schedule("elr"), config.budget,
                             config.batch_size, seed)
        ev = ensemble_evaluate(ens, test)
        init = ensemble_evaluate(ensemble_train(shards, spec, config.rate_schedule("elr"), 0,
                                                config.batch_size, seed), test)
        rows = [dict(round=-1, epoch_cum=0, T_i=0, rel_change=None,
                     shared_test_acc=init.accuracy, shared_test_loss=init.mean_loss,
                     upload_bytes=0, download_bytes=0, interval_s=0.0)]
        if config.budget > 0:
            rows.append(dict(round=0, epoch_cum=config.budget, T_i=config.budget, rel_change=None,
                             shared_test_acc=ev.accuracy, shared_test_loss=ev.mean_loss,
                             upload_bytes=0, download_bytes=0,
                             interval_s=config.budget * config.per_epoch_seconds))
        result = RunResult(seed, mode, ev.accuracy, ev.mean_loss, out, None, rows)
        result.extra = dict(members=len(ens.members),
                            member_accuracy=[evaluate(spec, m, test).accuracy for m in ens.members])
        params = list(ens.members)
    else:
        raise ValueError(f"run_single does not handle mode {mode!r}")

    summary.update(final_accuracy=result.final_accuracy, final_loss=result.final_loss,
                   initial_accuracy=rows[0]["shared_test_acc"], **result.extra)
    if out is not None:
        write_history_csv(out / "history.csv", rows)
        _write_json(out / "summary.json", summary)
        if len(params) == 1:
            save_checkpoint(out / "final.ckpt", params[0])
        else:
            for k, p in enumerate(params):
                save_checkpoint(out / f"final_member_{k}.ckpt", p)
    return result


@dataclass
class AblationResult:
    # curves[label][seed] -> accuracy at per-participant epochs 0..budget
    curves: dict[str, dict[int, list[float]]]
    final: dict[str, list[float]]

    def mean(self, label: str) -> float:
        return statistics.fmean(self.final[label])

    def std(self, label: str) -> float:
        vals = self.final[label]
        return statistics.stdev(vals) if len(vals) > 1 else 0.0


def run_ablation(config: RunConfig, seeds=None, out_dir=None) -> AblationResult:
    """All four rate x epoch-policy combinations under identical seeds and budget."""
    seeds = list(config.seeds if seeds is None else seeds)
    out = Path(out_dir) if out_dir is not None else None
    curves: dict[str, dict[int, list[float]]] = {}
    final: dict[str, list[float]] = {}
    for seed in seeds:
        for rate, policy in SERIES:
            label = series_label(rate, policy)
            sub = out / label.replace("+", "_") / f"seed_{seed}" if out is not None else None
            res = run_single(config, seed, sub, mode="colearn", rate=rate, epoch_policy=policy)
            curves.setdefault(label, {})[seed] = res.history.accuracy_by_epoch(config.budget)
            final.setdefault(label, []).append(res.final_accuracy)
            log.info("seed=%d %s final_acc=%.4f", seed, label, res.final_accuracy)
    result = AblationResult(curves, final)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with (out / "ablation_curves.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "series", "epoch", "shared_test_acc"])
            for seed in seeds:
                for label in curves:
                    for e, acc in enumerate(curves[label][seed]):
                        w.writerow([seed, label, e, repr(acc)])
        with (out / "ablation_summary.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["series", "mean_final_acc", "std_final_acc", "n_seeds"])
            for label in curves:
                w.writerow([label, repr(result.mean(label)), repr(result.std(label)), len(seeds)])
        _write_json(out / "summary.json", dict(
            seeds=seeds, config=config.to_dict(),
            series={label: dict(mean=result.mean(label), std=result.std(label),
                                final=final[label]) for label in curves}))
    return result


def partition_to_files(config: RunConfig, seed: int, out_dir) -> list[Path]:
    """Write the seed's training split as K shard CSV files."""
    train, _ = prepare_data(config, seed)
    shards = partition_iid(train, config.K, derive_seed(seed, PARTITION))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for shard in shards:
        path = out / f"shard_{shard.participant_id}.csv"
        save_csv(path, shard.data)
        paths.append(path)
    return paths
