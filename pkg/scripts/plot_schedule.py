#!/usr/bin/env python3
"""Dump a warmup+cosine learning-rate curve as CSV and optionally plot it.

Example:
    python scripts/plot_schedule.py --base-lr 0.001 --total-iters 20000 \
        --base-batch 16 --actual-batch 48 --out lr.csv --png lr.png
"""

import argparse

from detkit.schedule import ScheduleConfig, schedule_dump, write_schedule_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--base-lr", type=float, default=0.001)
    ap.add_argument("--total-iters", type=int, default=20000)
    ap.add_argument("--warmup-iters", type=int, default=3000)
    ap.add_argument("--min-lr", type=float, default=0.0)
    ap.add_argument("--base-batch", type=int, default=1)
    ap.add_argument("--actual-batch", type=int, default=None)
    ap.add_argument("--stride", type=int, default=50)
    ap.add_argument("--out", default="lr.csv")
    ap.add_argument("--png", default=None, help="optional plot output")
    args = ap.parse_args()

    cfg = ScheduleConfig(
        base_lr=args.base_lr,
        total_iters=args.total_iters,
        warmup_iters=args.warmup_iters,
        min_lr=args.min_lr,
        base_batch=args.base_batch,
        actual_batch=args.actual_batch,
    )
    rows = schedule_dump(cfg, args.stride)
    with open(args.out, "w") as f:
        write_schedule_csv(rows, f)
    print(f"wrote {len(rows)} rows to {args.out} (peak lr {cfg.scaled_base_lr:.6g})")

    if args.png:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        its, lrs = zip(*rows)
        plt.figure(figsize=(7, 3.2))
        plt.plot(its, lrs)
        plt.axvline(cfg.warmup_iters, ls="--", lw=0.8, color="gray")
        plt.xlabel("iteration")
        plt.ylabel("learning rate")
        plt.tight_layout()
        plt.savefig(args.png, dpi=120)
        print(f"wrote {args.png}")


if __name__ == "__main__":
    main()
