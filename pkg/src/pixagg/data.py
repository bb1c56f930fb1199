"""Image I/O, procedural clean sequences, noisy-pair synthesis and cropping.

On-disk dataset layout::

    <root>/manifest.csv                   name,seed,sigma_s,sigma_r,motion_u,motion_v
    <root>/clean/seq_XXXX/frame_XX.pgm    8-bit sRGB clean frames
    <root>/noisy/seq_XXXX/frame_XX.pxt    linear-space noisy frames (unclipped)
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import FormatError, InvalidShapeError, TruncatedFileError
from .noise import NoiseParams, add_noise, inverse_gamma, sample_noise_params
from .sampling import sample_points
from .tensor import load_pxt, make_rng, save_pxt

# -- PGM ------------------------------------------------------------------------


def _header_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header integers after the magic."""
    pos = 2
    out = []
    while len(out) < count:
        if pos >= len(data):
            raise TruncatedFileError("PGM header ends early", pos)
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            if nl < 0:
                raise TruncatedFileError("PGM comment runs to end of file", pos)
            pos = nl + 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                pos += 1
            tok = data[start:pos]
            if not tok.isdigit():
                raise FormatError(f"bad PGM header field {tok[:16]!r}", start)
            out.append(int(tok))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("PGM header must end with a single whitespace byte", pos)
    return out, pos + 1


def read_pgm(path) -> np.ndarray:
    """Binary (P5) PGM -> float32 (h, w) normalised by maxval."""
    data = Path(path).read_bytes()
    if data[:2] != b"P5":
        raise FormatError(f"{path}: bad PGM magic {data[:2]!r}", 0)
    (w, h, maxval), pos = _header_tokens(data, 3)
    if w < 1 or h < 1:
        raise FormatError(f"{path}: empty PGM image {w}x{h}", 2)
    if not 1 <= maxval <= 65535:
        raise FormatError(f"{path}: maxval {maxval} out of range", 2)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * dtype.itemsize
    if len(data) - pos < need:
        raise TruncatedFileError(f"{path}: pixel data has {len(data) - pos} of {need} bytes", len(data))
    pix = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return (pix.astype(np.float64) / maxval).astype(np.float32)


load_image = read_pgm


def write_pgm(path, img, maxval: int = 255) -> None:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidShapeError(f"PGM images are 2-D, got {img.shape}")
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode())
        f.write(q.astype(dtype).tobytes())


# -- procedural clean content -------------------------------------------------


def make_canvas(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Random sRGB test image: shaded background, texture, shapes and edges."""
    v, u = np.meshgrid(np.arange(w), np.arange(h))
    img = rng.uniform(0.2, 0.8) + rng.uniform(-0.3, 0.3) * (u / h) + rng.uniform(-0.3, 0.3) * (v / w)
    img = img + gaussian_filter(rng.standard_normal((h, w)), rng.uniform(1.0, 3.0)) * rng.uniform(0.1, 0.4)
    for _ in range(rng.integers(6, 14)):
        kind = rng.integers(4)
        val = rng.uniform(0.02, 0.98)
        cu, cv = rng.uniform(0, h), rng.uniform(0, w)
        if kind == 0:  # rectangle
            hu, hv = rng.uniform(2, h / 4), rng.uniform(2, w / 4)
            mask = (np.abs(u - cu) < hu) & (np.abs(v - cv) < hv)
        elif kind == 1:  # disc
            mask = (u - cu) ** 2 + (v - cv) ** 2 < rng.uniform(2, min(h, w) / 5) ** 2
        elif kind == 2:  # thick line
            ang = rng.uniform(0, np.pi)
            dist = np.abs((u - cu) * np.sin(ang) - (v - cv) * np.cos(ang))
            mask = dist < rng.uniform(0.7, 3.0)
        else:  # grating patch
            r = rng.uniform(4, min(h, w) / 4)
            period = rng.uniform(3, 10)
            ang = rng.uniform(0, np.pi)
            phase = (u * np.cos(ang) + v * np.sin(ang)) / period
            mask = ((u - cu) ** 2 + (v - cv) ** 2 < r * r) & (np.floor(phase) % 2 == 0)
        img = np.where(mask, val, img)
    return quantize(np.clip(img, 0.0, 1.0))


def quantize(img, levels: int = 255):
    return (np.rint(np.clip(img, 0, 1) * levels) / levels).astype(np.float32)


def random_motion(rng, max_motion: float):
    """Per-frame displacement (rows, cols) with uniform magnitude and direction."""
    mag = rng.uniform(0, max_motion)
    ang = rng.uniform(0, 2 * np.pi)
    return (float(mag * np.sin(ang)), float(mag * np.cos(ang)))


COMPASS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def compass_motion(rng, shift: int):
    """Integer per-frame displacement of ``shift`` pixels along one of 8 directions."""
    su, sv = COMPASS[rng.integers(len(COMPASS))]
    return (float(su * shift), float(sv * shift))


def make_sequence(rng, size: int, tau: int, motion, canvas=None) -> np.ndarray:
    """Clean sRGB frames (2*tau+1, size, size) of a texture translating by
    ``motion`` pixels per frame; frame ``tau`` is an aligned crop."""
    du, dv = motion
    pad = int(math.ceil(tau * max(abs(du), abs(dv)))) + 2
    if canvas is None:
        canvas = make_canvas(rng, size + 2 * pad, size + 2 * pad)
    frames = []
    for k in range(-tau, tau + 1):
        ou, ov = pad + k * du, pad + k * dv
        if float(ou).is_integer() and float(ov).is_integer():
            ou, ov = int(ou), int(ov)
            frames.append(canvas[ou:ou + size, ov:ov + size])
        else:
            uu, vv = np.meshgrid(np.arange(size) + ou, np.arange(size) + ov, indexing="ij")
            pts = np.stack([uu.ravel(), vv.ravel()], axis=-1)
            frames.append(quantize(sample_points(canvas, pts).reshape(size, size)))
    return np.stack(frames).astype(np.float32)


# -- training pairs -------------------------------------------------------------


@dataclass
class SequenceSample:
    frames: np.ndarray  # (2*tau+1, h, w) linear-space clean
    noisy: np.ndarray   # same shape, linear-space noisy
    params: NoiseParams
    tau: int

    @property
    def reference(self):
        return self.frames[self.tau]

    @property
    def noisy_reference(self):
        return self.noisy[self.tau]


def synthesize_pair(clean_seq, p: NoiseParams | None, rng, tau: int | None = None) -> SequenceSample:
    """sRGB clean frames -> linear clean + noisy pair. ``p=None`` samples the noise level."""
    clean = np.asarray(clean_seq, dtype=np.float32)
    if clean.ndim == 2:
        clean = clean[None]
    if tau is None:
        tau = clean.shape[0] // 2
    if clean.shape[0] != 2 * tau + 1:
        raise InvalidShapeError(f"{clean.shape[0]} frames do not match tau={tau}")
    if p is None:
        p = sample_noise_params(rng)
    linear = inverse_gamma(clean)
    return SequenceSample(linear, add_noise(linear, p, rng), p, tau)


def crop_offsets(rng, h, w, size):
    if size > min(h, w) or size < 1:
        raise InvalidShapeError(f"patch size {size} does not fit a {h}x{w} frame")
    return int(rng.integers(h - size + 1)), int(rng.integers(w - size + 1))


def extract_patches(seq: SequenceSample, size: int, rng) -> SequenceSample:
    """Random ``size``x``size`` crop at the same place in every frame."""
    _, h, w = seq.frames.shape
    top, left = crop_offsets(rng, h, w, size)
    sl = (slice(None), slice(top, top + size), slice(left, left + size))
    return SequenceSample(seq.frames[sl], seq.noisy[sl], seq.params, seq.tau)


# -- datasets on disk -------------------------------------------------------------


@dataclass
class DatasetEntry:
    name: str
    clean: np.ndarray  # (F, h, w) sRGB
    noisy: np.ndarray  # (F, h, w) linear
    params: NoiseParams
    motion: tuple
    seed: int

    @property
    def tau(self):
        return self.clean.shape[0] // 2

    @property
    def ground_truth(self):
        """Linear clean reference frame."""
        return inverse_gamma(self.clean[self.tau])


def sequence_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def generate_entry(index, seed, size, tau, sigma_s=None, sigma_r=None, max_motion=6.0, shift=None):
    s = sequence_seed(seed, index)
    rng = make_rng(s)
    motion = compass_motion(rng, shift) if shift is not None else random_motion(rng, max_motion)
    clean = make_sequence(rng, size, tau, motion)
    if sigma_s is None or sigma_r is None:
        p = sample_noise_params(rng)
    else:
        p = NoiseParams(sigma_s, sigma_r)
    noisy = add_noise(inverse_gamma(clean), p, rng)
    return DatasetEntry(f"seq_{index:04d}", clean, noisy, p, motion, s)


def write_dataset(root, entries) -> None:
    root = Path(root)
    (root / "clean").mkdir(parents=True, exist_ok=True)
    (root / "noisy").mkdir(parents=True, exist_ok=True)
    with open(root / "manifest.csv", "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["name", "seed", "sigma_s", "sigma_r", "motion_u", "motion_v"])
        for e in entries:
            wr.writerow([e.name, e.seed, repr(e.params.sigma_s), repr(e.params.sigma_r),
                         repr(e.motion[0]), repr(e.motion[1])])
            write_sequence(root / "clean" / e.name, e.clean, "pgm")
            write_sequence(root / "noisy" / e.name, e.noisy, "pxt")


def write_sequence(d, frames, fmt="pgm"):
    os.makedirs(d, exist_ok=True)
    for k, fr in enumerate(frames):
        if fmt == "pgm":
            write_pgm(Path(d) / f"frame_{k:02d}.pgm", fr)
        else:
            save_pxt(Path(d) / f"frame_{k:02d}.pxt", fr)


def read_sequence(d) -> np.ndarray:
    """Frames of a sequence directory (PXT1 preferred over PGM), stacked (F, h, w)."""
    d = Path(d)
    if not d.is_dir():
        raise FileNotFoundError(f"sequence directory {d} not found")
    files = sorted(d.glob("frame_*.pxt")) or sorted(d.glob("frame_*.pgm"))
    if not files:
        raise FileNotFoundError(f"no frame_XX.pxt / frame_XX.pgm files in {d}")
    load = load_pxt if files[0].suffix == ".pxt" else read_pgm
    return np.stack([load(f) for f in files]).astype(np.float32)


def load_dataset(root, need_noisy: bool = True) -> list[DatasetEntry]:
    root = Path(root)
    manifest = root / "manifest.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.csv in {root}")
    out = []
    with open(manifest, newline="") as f:
        for row in csv.DictReader(f):
            name = row["name"]
            clean = read_sequence(root / "clean" / name)
            noisy = read_sequence(root / "noisy" / name) if need_noisy else None
            p = NoiseParams(float(row["sigma_s"]), float(row["sigma_r"]))
            motion = (float(row["motion_u"]), float(row["motion_v"]))
            out.append(DatasetEntry(name, clean, noisy, p, motion, int(row["seed"])))
    return out
