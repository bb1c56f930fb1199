"""Receptive-field size of a trained model's sampling grid across noise levels.

    python scripts/receptive_field.py runs/toy/checkpoint.pxc
"""
import argparse

import numpy as np

from pixagg.aggregation import receptive_field_stat
from pixagg.evaluate import run_model
from pixagg.experiments import moving_entries
from pixagg.model import load_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("checkpoint")
    ap.add_argument("--levels", default="0.01,0.03,0.06,0.1,0.15", help="read-noise std values")
    ap.add_argument("--count", type=int, default=4)
    args = ap.parse_args()

    model, _ = load_checkpoint(args.checkpoint)
    if not model.cfg.learn_offsets:
        ap.error(f"{model.cfg.mode} models sample a fixed grid")
    rigid = receptive_field_stat(np.zeros((1, 1, model.grid.n, model.grid.dim)), model.grid)
    print(f"rigid grid span {rigid:.2f} px")
    for level in (float(v) for v in args.levels.split(",")):
        stats = []
        for e in moving_entries(seed=31, count=args.count, tau=model.cfg.tau, sigma_r=level):
            out = run_model(model, e.noisy, e.params)
            stats.append(receptive_field_stat(out["offsets"][0], model.grid))
        print(f"sigma_r {level:.3f}: mean span {np.mean(stats):.2f} px")


if __name__ == "__main__":
    main()
