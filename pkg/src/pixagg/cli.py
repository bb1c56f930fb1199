"""``pixagg`` command line: synth, train, denoise, eval, visgrid."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .aggregation import receptive_field_stat
from .config import coerce, load_config, write_config
from .data import generate_entry, load_dataset, read_sequence, write_dataset, write_pgm
from .errors import ConfigError, PixaggError
from .evaluate import evaluate, run_model, write_metrics
from .model import DEPTH, load_checkpoint, save_checkpoint
from .noise import NoiseParams, gamma_correct, inverse_gamma
from .tensor import save_pxt
from .train import TrainConfig, train

log = logging.getLogger("pixagg")

SYNTH_DEFAULTS = {
    "count": 8,
    "tau": 2,
    "size": 32,
    "sigma_s": None,
    "sigma_r": None,
    "max_motion": 6.0,
    "shift": None,
    "seed": 0,
}
TRAIN_DEFAULTS = {f.name: f.default for f in fields(TrainConfig)}


def _resolve(args, defaults: dict) -> dict:
    """defaults <- config file <- explicit flags."""
    values = dict(defaults)
    if args.config:
        for k, v in load_config(args.config, allowed=set(defaults)).items():
            values[k] = coerce(v, defaults[k])
    for k in defaults:
        flag = getattr(args, k, None)
        if flag is not None:
            values[k] = flag
    return values


def _threads(n):
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _noise_params(args, required: bool):
    if args.sigma_s is None and args.sigma_r is None:
        if required:
            raise ConfigError("non-blind model needs --sigma-s/--sigma-r")
        return None
    return NoiseParams(args.sigma_s or 0.0, args.sigma_r or 0.0)


def _load_input(path) -> np.ndarray:
    """Noisy linear frames from a sequence directory (PXT1) or sRGB PGMs."""
    p = Path(path)
    if p.is_dir():
        frames = read_sequence(p)
        if not any(p.glob("frame_*.pxt")):
            frames = inverse_gamma(frames)
        return frames
    if p.suffix == ".pgm":
        from .data import read_pgm

        return inverse_gamma(read_pgm(p))[None]
    from .tensor import load_pxt

    x = load_pxt(p)
    return x[None] if x.ndim == 2 else x


# -- commands -------------------------------------------------------------------


def cmd_synth(args):
    cfg = _resolve(args, SYNTH_DEFAULTS)
    if (cfg["sigma_s"] is None) != (cfg["sigma_r"] is None):
        cfg["sigma_s"] = cfg["sigma_s"] or 0.0
        cfg["sigma_r"] = cfg["sigma_r"] or 0.0
    if cfg["count"] < 1 or cfg["size"] < 1 or cfg["tau"] < 0:
        raise ConfigError("count and size must be >= 1, tau >= 0")
    shift = None if cfg["shift"] is None else int(cfg["shift"])
    entries = [
        generate_entry(i, cfg["seed"], cfg["size"], cfg["tau"], cfg["sigma_s"], cfg["sigma_r"],
                       cfg["max_motion"], shift)
        for i in range(cfg["count"])
    ]
    out = Path(args.out)
    write_dataset(out, entries)
    write_config(out / "config.txt", cfg)
    print(f"wrote {len(entries)} sequences of {2 * cfg['tau'] + 1} frames to {out}")


def cmd_train(args):
    cfg_dict = _resolve(args, TRAIN_DEFAULTS)
    cfg = TrainConfig(**cfg_dict)
    mcfg = cfg.model_config()
    if cfg.patch % 2**DEPTH:
        raise ConfigError(f"patch size {cfg.patch} must be divisible by {2**DEPTH}")
    if args.data is None:
        raise ConfigError("train needs --data pointing at a dataset from `pixagg synth`")
    entries = load_dataset(args.data, need_noisy=False)
    pool = [e.clean for e in entries]
    for e in entries:
        if mcfg.video and e.clean.shape[0] < mcfg.frames:
            raise ConfigError(f"{e.name} has {e.clean.shape[0]} frames, model needs {mcfg.frames}")
        if min(e.clean.shape[1:]) < cfg.patch:
            raise ConfigError(f"{e.name} is smaller than the {cfg.patch}px patch")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(out / "config.txt", cfg_dict)
    model, state, rows = train(cfg, pool, log_path=out / "loss.csv")
    save_checkpoint(out / "checkpoint.pxc", model, state.step)
    final = rows[-1][1] if rows else float("nan")
    print(f"trained {cfg.mode} for {state.step} iterations, final loss {final:.6f}; checkpoint {out / 'checkpoint.pxc'}")


def cmd_denoise(args):
    model, _ = load_checkpoint(args.checkpoint)
    noisy = _load_input(args.input)
    params = _noise_params(args, required=not model.cfg.blind)
    out = run_model(model, noisy, params)
    y = out["y"][0]
    dst = Path(args.out)
    dst.mkdir(parents=True, exist_ok=True)
    write_pgm(dst / "denoised.pgm", gamma_correct(y))
    save_pxt(dst / "denoised.pxt", y)
    write_config(dst / "config.txt", {"checkpoint": args.checkpoint, "input": args.input,
                                      "sigma_s": args.sigma_s, "sigma_r": args.sigma_r})
    print(f"denoised {y.shape[0]}x{y.shape[1]} reference frame -> {dst}")


def cmd_eval(args):
    entries = load_dataset(args.data)
    models = {}
    if args.checkpoint:
        m, _ = load_checkpoint(args.checkpoint)
        models[m.cfg.mode] = m
    if args.rigid_checkpoint:
        m, _ = load_checkpoint(args.rigid_checkpoint)
        models["rigid" if "rigid" not in models else "rigid_2"] = m
    rows = evaluate(entries, models)
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "metrics.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    write_metrics(out, rows)
    write_config(out.with_name("eval_config.txt"), {"checkpoint": args.checkpoint,
                                                    "rigid_checkpoint": args.rigid_checkpoint, "data": args.data})
    for name, p, s in rows:
        if name.endswith("/mean"):
            print(f"{name:28s} psnr {p:8.3f}  ssim {s:.4f}")


def cmd_visgrid(args):
    model, _ = load_checkpoint(args.checkpoint)
    cfg = model.cfg
    noisy = _load_input(args.input)
    params = _noise_params(args, required=not cfg.blind)
    out = run_model(model, noisy, params)
    if "offsets" not in out:
        raise ConfigError(f"{cfg.mode} models have no sampling grid")
    offsets, weights = out["offsets"][0], out["weights"][0]
    h, w = offsets.shape[:2]
    u, v = args.pixel
    if not (0 <= u < h and 0 <= v < w):
        raise ConfigError(f"pixel ({u}, {v}) outside the {h}x{w} image")
    pos = model.grid.points + offsets[u, v].astype(np.float64)

    stats = [offsets]
    if args.data:
        for e in load_dataset(args.data):
            stats.append(run_model(model, e.noisy, e.params if params is None else params)["offsets"][0])
    rf = float(np.mean([receptive_field_stat(o, model.grid) for o in stats[1:] or stats]))

    dst = Path(args.out)
    if dst.suffix != ".csv":
        dst.mkdir(parents=True, exist_ok=True)
        dst = dst / "grid.csv"
    else:
        dst.parent.mkdir(parents=True, exist_ok=True)
    cols = ["u", "v", "t"][: cfg.dim]
    with open(dst, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(cols + ["weight"])
        for i in range(model.grid.n):
            wr.writerow([f"{c:.6f}" for c in pos[i]] + [f"{float(weights[u, v, i]):.6f}"])
    dst.with_name("receptive_field.txt").write_text(f"receptive_field={rf:.6f}\n")
    print(f"wrote {model.grid.n} sampling locations to {dst}; receptive field {rf:.4f}")


# -- argument parsing -------------------------------------------------------------


def _pixel(s):
    try:
        u, v = (int(t) for t in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"pixel must be 'row,col', got {s!r}") from None
    return u, v


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None, help="cap on BLAS worker threads")
    common.add_argument("--config", default=None, help="key=value config file")
    common.add_argument("--out", required=True)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pixagg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic clean/noisy dataset")
    s.add_argument("--count", type=int)
    s.add_argument("--tau", type=int)
    s.add_argument("--size", type=int)
    s.add_argument("--sigma-s", type=float)
    s.add_argument("--sigma-r", type=float)
    s.add_argument("--max-motion", type=float)
    s.add_argument("--shift", type=int, help="fixed integer per-frame shift along a compass direction")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", parents=[common], help="train a model on a synthetic dataset")
    t.add_argument("--data")
    t.add_argument("--mode")
    t.add_argument("--iters", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--patch", type=int)
    t.add_argument("--width-mult", type=float)
    t.add_argument("--offset-scale", type=float)
    t.add_argument("--tau", type=int)
    t.add_argument("--groups", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--eta", type=float)
    t.add_argument("--gamma", type=float)
    t.add_argument("--sigma-s", type=float)
    t.add_argument("--sigma-r", type=float)
    t.add_argument("--blind", action="store_true", default=None)
    t.set_defaults(func=cmd_train)

    for name, fn, helptext in (("denoise", cmd_denoise, "denoise one sequence"),
                               ("visgrid", cmd_visgrid, "dump the sampling grid at one pixel")):
        d = sub.add_parser(name, parents=[common], help=helptext)
        d.add_argument("--checkpoint", required=True)
        d.add_argument("--input", required=True, help="sequence directory, .pgm or .pxt file")
        d.add_argument("--sigma-s", type=float)
        d.add_argument("--sigma-r", type=float)
        if name == "visgrid":
            d.add_argument("--pixel", type=_pixel, required=True, help="row,col")
            d.add_argument("--data", help="dataset for the receptive-field statistic")
        d.set_defaults(func=fn)

    e = sub.add_parser("eval", parents=[common], help="PSNR/SSIM of a model and baselines")
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint")
    e.add_argument("--rigid-checkpoint")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    limits = _threads(args.threads)
    try:
        args.func(args)
    except (PixaggError, OSError, ValueError) as exc:
        print(f"pixagg {args.command}: error: {exc}", file=sys.stderr)
        return 2
    finally:
        if limits is not None:
            limits.restore_original_limits()
    return 0


if __name__ == "__main__":
    sys.exit(main())
