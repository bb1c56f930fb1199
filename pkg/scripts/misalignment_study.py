"""PSNR of an adaptive-grid model against a rigid-grid model as inter-frame shift grows.

Trains both models unless checkpoints are given, then evaluates held-out
sequences translating by 0, 2, 4 and 6 pixels per frame.

    python scripts/misalignment_study.py --iters 1000 --out runs/shift
"""
import argparse
import csv
import logging
from pathlib import Path

from pixagg.experiments import TOY_SIGMA, shift_study, toy_pool
from pixagg.model import load_checkpoint, save_checkpoint
from pixagg.train import TrainConfig, train


def get_model(mode, ckpt, args, pool, out):
    if ckpt:
        return load_checkpoint(ckpt)[0]
    cfg = TrainConfig(mode=mode, iters=args.iters, sigma_s=0.0, sigma_r=TOY_SIGMA, seed=args.seed)
    model, state, _ = train(cfg, pool, log_path=out / f"{mode}_loss.csv")
    save_checkpoint(out / f"{mode}.pxc", model, state.step)
    return model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--adaptive", help="stpan checkpoint to reuse")
    ap.add_argument("--rigid", help="rigid checkpoint to reuse")
    ap.add_argument("--shifts", default="0,2,4,6")
    ap.add_argument("--count", type=int, default=6)
    ap.add_argument("--out", default="runs/shift")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pool = None if args.adaptive and args.rigid else toy_pool()
    models = {"stpan": get_model("stpan", args.adaptive, args, pool, out),
              "rigid": get_model("rigid", args.rigid, args, pool, out)}
    shifts = tuple(int(s) for s in args.shifts.split(","))
    res = shift_study(models, shifts=shifts, count=args.count)

    methods = ["reference", "direct_average", "rigid", "stpan"]
    with open(out / "shift_psnr.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["shift"] + methods + ["advantage"])
        for s in shifts:
            r = res[s]
            w.writerow([s] + [f"{r[m]:.3f}" for m in methods] + [f"{r['stpan'] - r['rigid']:.3f}"])
    print("shift " + " ".join(f"{m:>15s}" for m in methods) + "  stpan-rigid")
    for s in shifts:
        r = res[s]
        print(f"{s:5d} " + " ".join(f"{r[m]:15.2f}" for m in methods) + f"  {r['stpan'] - r['rigid']:+.2f}")


if __name__ == "__main__":
    main()
