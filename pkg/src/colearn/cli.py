"""Command-line entry point: ``colearn run|ablate|partition``.

Exit codes: 0 success, 2 configuration error, 3 runtime abort.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, DatasetLoadError, RoundAbortError
from .experiment import SERIES, partition_to_files, run_ablation, run_single, series_label

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3

log = logging.getLogger("colearn")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, action="append", dest="seeds",
                        help="seed to run (repeatable; overrides the config's seed list)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--set", action="append", default=[], dest="overrides", metavar="KEY=VALUE",
                        help="override one config field (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="colearn", description="Co-learning experiment runner.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the configured mode once per seed")
    sub.add_parser("ablate", parents=[common], help="CLR/ELR x ILE/FLE comparison")
    sub.add_parser("partition", parents=[common], help="write K IID shard CSV files")
    return parser


def _load(args):
    overrides = list(args.overrides)
    if args.seeds:
        overrides.append(f"seeds={args.seeds}")
    if args.out is not None:
        overrides.append(f"out={args.out}")
    return load_config(args.config, overrides)


def _cmd_run(config, out: Path) -> None:
    mode = config.mode
    if mode == "ablate":
        _cmd_ablate(config, out)
        return
    for seed in config.seeds:
        res = run_single(config, seed, out / f"seed_{seed}")
        extra = ""
        if mode == "colearn":
            extra = f" rounds={res.extra['rounds']} bytes={res.extra['total_bytes']}"
        print(f"mode={mode} seed={seed} epochs={config.budget} "
              f"acc={res.final_accuracy:.4f} loss={res.final_loss:.4f}{extra}", flush=True)


def _cmd_ablate(config, out: Path) -> None:
    res = run_ablation(config, out_dir=out)
    for rate, policy in SERIES:
        label = series_label(rate, policy)
        print(f"{label:8s} acc={res.mean(label):.4f} +/- {res.std(label):.4f} "
              f"(n={len(res.final[label])})", flush=True)


def _cmd_partition(config, out: Path) -> None:
    for seed in config.seeds:
        paths = partition_to_files(config, seed, out / f"seed_{seed}")
        print(f"seed={seed} K={config.K} wrote {len(paths)} shards to {paths[0].parent}", flush=True)


COMMANDS = {"run": _cmd_run, "ablate": _cmd_ablate, "partition": _cmd_partition}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](config, Path(config.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RoundAbortError, DatasetLoadError, OSError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
