"""Final accuracy of vanilla, ensemble and co-learning under one epoch budget.

    python scripts/compare_modes.py --config configs/xor_rings.yaml --out runs/compare
"""

import argparse
import csv
import statistics
from pathlib import Path

from colearn.config import load_config
from colearn.experiment import run_single

MODES = ("vanilla", "ensemble", "colearn")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, required=True)
    ap.add_argument("--out", type=Path, default=Path("runs/compare"))
    ap.add_argument("--set", action="append", default=[], dest="overrides")
    args = ap.parse_args()
    cfg = load_config(args.config, args.overrides)

    finals = {m: [] for m in MODES}
    for mode in MODES:
        for seed in cfg.seeds:
            res = run_single(cfg, seed, args.out / mode / f"seed_{seed}", mode=mode)
            finals[mode].append(100 * res.final_accuracy)
            print(f"{mode:9s} seed={seed} acc={finals[mode][-1]:.2f}%", flush=True)

    args.out.mkdir(parents=True, exist_ok=True)
    with (args.out / "comparison.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "mean_acc_pct", "std_acc_pct", "n_seeds"])
        for mode in MODES:
            vals = finals[mode]
            std = statistics.stdev(vals) if len(vals) > 1 else 0.0
            w.writerow([mode, f"{statistics.fmean(vals):.3f}", f"{std:.3f}", len(vals)])
            print(f"{mode:9s} {statistics.fmean(vals):6.2f} +/- {std:.2f}")


if __name__ == "__main__":
    main()
