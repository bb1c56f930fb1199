"""Train a desk-scale model on procedural sequences and compare it with the baselines.

    python scripts/toy_training.py --mode stpan --iters 1000 --out runs/toy
"""
import argparse
import logging
import time
from pathlib import Path

from pixagg.evaluate import evaluate, summary, write_metrics
from pixagg.experiments import TOY_SIGMA, moving_entries, toy_pool
from pixagg.model import save_checkpoint
from pixagg.train import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", default="stpan")
    ap.add_argument("--iters", type=int, default=1000)
    ap.add_argument("--batch", type=int, default=8)
    ap.add_argument("--lr", type=float, default=2e-4)
    ap.add_argument("--pool", type=int, default=256)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="runs/toy")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = TrainConfig(mode=args.mode, iters=args.iters, batch=args.batch, lr=args.lr,
                      sigma_s=0.0, sigma_r=TOY_SIGMA, seed=args.seed)
    t0 = time.perf_counter()
    model, state, _ = train(cfg, toy_pool(count=args.pool), log_path=out / "loss.csv")
    print(f"trained {args.mode} for {state.step} iterations in {time.perf_counter() - t0:.0f}s")
    save_checkpoint(out / "checkpoint.pxc", model, state.step)

    rows = evaluate(moving_entries(seed=2024, count=8), {args.mode: model})
    write_metrics(out / "metrics.csv", rows)
    for name, (p, s) in summary(rows).items():
        print(f"{name:16s} psnr {p:6.2f}  ssim {s:.4f}")


if __name__ == "__main__":
    main()
