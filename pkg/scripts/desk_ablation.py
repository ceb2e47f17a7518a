"""Desk-scale ablation: one teacher and four students per master seed.

    python scripts/desk_ablation.py --config scripts/desk_config.json --seeds 0 1 2 3 4 --out runs/desk
"""

import argparse
import csv
import logging
import time
from pathlib import Path

from specswd.config import load_config, write_config
from specswd.experiment import run_seed, summarize
from specswd.synth import generate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(Path(__file__).with_name("desk_config.json")))
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", default="runs/desk")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")

    cfg = load_config(args.config)
    out = Path(args.out)
    write_config(cfg, out)
    start = time.perf_counter()
    data = generate_dataset(cfg.gen)
    runs = []
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "variant", "teacher_val_acc", "acc", "r_at_1", "n"])
        for seed in args.seeds:
            for r in run_seed(data, cfg, seed):
                runs.append(r)
                w.writerow([seed, r.variant, r.teacher_val_acc, r.result.acc, r.result.recall_at_1, r.result.n])
                fh.flush()
    rows = summarize(runs)
    base = rows[0]["acc"]
    print("variant,acc,r_at_1,delta_acc")
    for r in rows:
        print(f"{r['variant']},{r['acc']:.4f},{r['r_at_1']:.4f},{r['acc'] - base:+.4f}")
    print(f"elapsed {(time.perf_counter() - start) / 60:.1f} min")


if __name__ == "__main__":
    main()
