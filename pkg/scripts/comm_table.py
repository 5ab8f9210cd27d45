"""Communication volume and synchronization interval, ILE against FLE.

For a fixed per-participant epoch budget, reports the number of
synchronizations, total bytes moved and the simulated interval of the
first and last round under each epoch policy.

    python scripts/comm_table.py --config configs/blobs_parity.yaml --seed 0
"""

import argparse
from pathlib import Path

from colearn.config import load_config
from colearn.coordinator import run_colearning
from colearn.wansim import total_bytes


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--set", action="append", default=[], dest="overrides")
    args = ap.parse_args()
    cfg = load_config(args.config, args.overrides)

    print(f"{'policy':6s} {'syncs':>5s} {'MB moved':>10s} {'first (min)':>12s} {'last (min)':>11s}  T per round")
    for policy in ("fle", "ile"):
        h = run_colearning(cfg, args.seed, epoch_policy=policy)
        comm = [r.comm for r in h.rounds]
        mb = total_bytes(comm) / 1e6
        print(f"{policy.upper():6s} {len(comm):5d} {mb:10.3f} {comm[0].interval_seconds / 60:12.2f} "
              f"{comm[-1].interval_seconds / 60:11.2f}  {[r.epochs for r in h.rounds]}")


if __name__ == "__main__":
    main()
