"""Offset U-Net, weight branch and the full pixel aggregation network.

The offset network is a 4-level U-Net (2x average pooling after C3, C6, C9;
nearest upsampling before C19, C22, C25) with pixel-wise skip sums:

    C1-3   (64)  --------------------------------------> + after C26 (128, zero-padded)
    C4-6   (128) ------------------------> + after C24 (128)
    C7-9   (256) ----------> + after C21 (256)
    C10-15 (512) -> C16-18 (512)

Channel counts are the full-width plan multiplied by ``width_mult``.
"""
from __future__ import annotations

import io
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import nn
from .aggregation import build_rigid_grid, contiguous_partition, sample_grid, samples_backward
from .errors import ConfigError, FormatError, InvalidShapeError, TruncatedFileError
from .tensor import make_rng, read_pxt_stream, write_pxt_stream

MODES = ("pan", "stpan", "rigid", "fixed-weights", "direct", "no-reg", "no-concat")

# full-width feature counts: offset-net stages then the weight branch
UNET_PLAN = (64, 128, 256, 512, 512, 256, 128, 128)
WEIGHT_PLAN = 64
DEPTH = 3  # number of 2x downsamplings


@dataclass
class ModelConfig:
    mode: str = "stpan"
    width_mult: float = 0.125
    tau: int = 2
    blind: bool = False
    offset_scale: float = 8.0
    grid: tuple = ()  # empty -> (5, 5) for pan, (3, 3, 3) otherwise
    groups: int = 3
    normalize_weights: bool = False
    head_init: float = 0.1  # init range multiplier of the last offset layer
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if not self.grid:
            self.grid = (5, 5) if self.mode == "pan" else (3, 3, 3)
        self.grid = tuple(int(g) for g in self.grid)
        if len(self.grid) != (2 if self.mode == "pan" else 3):
            raise ConfigError(f"mode {self.mode} cannot use a grid of size {self.grid}")
        if self.tau < 0 or self.width_mult <= 0:
            raise ConfigError("tau must be >= 0 and width_mult > 0")
        if self.video and self.n % self.groups:
            raise ConfigError(f"{self.groups} groups do not divide {self.n} samples")

    @property
    def video(self):
        return self.mode != "pan"

    @property
    def frames(self):
        return 2 * self.tau + 1 if self.video else 1

    @property
    def dim(self):
        return len(self.grid)

    @property
    def n(self):
        return int(np.prod(self.grid))

    @property
    def in_channels(self):
        return self.frames + (0 if self.blind else 1)

    @property
    def learn_offsets(self):
        return self.mode not in ("rigid", "direct")

    @property
    def regularize(self):
        return self.video and self.mode not in ("no-reg", "direct")

    def ch(self, k):
        return max(1, int(round(k * self.width_mult)))

    def to_text(self):
        lines = [f"{f.name}={_fmt(getattr(self, f.name))}" for f in fields(self)]
        lines += [f"n={self.n}", f"d={self.dim}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kv = {}
        for line in text.splitlines():
            if line.strip():
                k, _, v = line.partition("=")
                kv[k.strip()] = v.strip()
        kw = {}
        for f in fields(cls):
            if f.name in kv:
                kw[f.name] = _parse(f.type, kv[f.name])
        return cls(**kw)


def _fmt(v):
    if isinstance(v, tuple):
        return "x".join(str(i) for i in v)
    return str(v).lower() if isinstance(v, bool) else repr(v) if isinstance(v, float) else str(v)


def _parse(typ, s):
    typ = str(typ)
    if typ == "bool":
        return s.lower() in ("1", "true", "yes")
    if typ == "int":
        return int(s)
    if typ == "float":
        return float(s)
    if typ == "tuple":
        return tuple(int(v) for v in s.split("x")) if s else ()
    return s


class Block:
    """A run of conv + ReLU layers."""

    def __init__(self, convs):
        self.convs = convs

    def forward(self, x):
        self._outs = []
        for c in self.convs:
            x = nn.relu(c.forward(x))
            self._outs.append(x)
        return x

    def backward(self, g, grads, need_x=True):
        for i in range(len(self.convs) - 1, -1, -1):
            g = nn.relu_backward(self._outs[i], g)
            g = self.convs[i].backward(g, grads, need_x=need_x or i > 0)
        return g


class OffsetNet:
    def __init__(self, cfg: ModelConfig, out_channels: int, rng):
        c64, c128, c256, c512 = (cfg.ch(k) for k in (64, 128, 256, 512))
        names = iter(f"offset.C{i}" for i in range(1, 28))

        def block(cin, cout, count):
            convs = [nn.Conv(next(names), cin, cout, rng)]
            convs += [nn.Conv(next(names), cout, cout, rng) for _ in range(count - 1)]
            return Block(convs)

        self.enc = [
            block(cfg.in_channels, c64, 3),
            block(c64, c128, 3),
            block(c128, c256, 3),
            block(c256, c512, 6),
        ]
        self.dec = [
            block(c512, c512, 3),
            block(c512, c256, 3),
            block(c256, c128, 3),
            block(c128, c128, 2),
        ]
        self.c64 = c64
        self.feature_channels = c128
        self.head = None
        if out_channels:
            scale = cfg.head_init if cfg.learn_offsets else 1.0
            self.head = nn.Conv(next(names), c128, out_channels, rng, init_scale=scale)

    def convs(self):
        out = [c for b in self.enc + self.dec for c in b.convs]
        return out + ([self.head] if self.head is not None else [])

    def forward(self, x):
        """Returns ``(head_output or None, last_features)``."""
        b, h, w, _ = x.shape
        if h % 2**DEPTH or w % 2**DEPTH:
            raise InvalidShapeError(f"input size {h}x{w} is not divisible by {2**DEPTH}")
        e0 = self.enc[0].forward(x)
        e1 = self.enc[1].forward(nn.avg_pool2(e0))
        e2 = self.enc[2].forward(nn.avg_pool2(e1))
        bott = self.enc[3].forward(nn.avg_pool2(e2))
        d = self.dec[0].forward(bott)
        d = self.dec[1].forward(nn.upsample2(d)) + e2
        d = self.dec[2].forward(nn.upsample2(d)) + e1
        d = self.dec[3].forward(nn.upsample2(d)).copy()
        d[..., : self.c64] += e0
        head = self.head.forward(d) if self.head is not None else None
        return head, d

    def backward(self, g_head, g_feat, grads):
        if g_head is not None:
            gh = self.head.backward(g_head, grads)
            g = gh if g_feat is None else g_feat + gh
        else:
            g = g_feat
        g_e0 = g[..., : self.c64]
        g = nn.upsample2_backward(self.dec[3].backward(g, grads))
        g_e1 = g
        g = nn.upsample2_backward(self.dec[2].backward(g, grads))
        g_e2 = g
        g = nn.upsample2_backward(self.dec[1].backward(g, grads))
        g = self.dec[0].backward(g, grads)
        g_e2 = g_e2 + nn.avg_pool2_backward(self.enc[3].backward(g, grads))
        g_e1 = g_e1 + nn.avg_pool2_backward(self.enc[2].backward(g_e2, grads))
        g_e0 = g_e0 + nn.avg_pool2_backward(self.enc[1].backward(g_e1, grads))
        self.enc[0].backward(g_e0, grads, need_x=False)


class WeightBranch:
    def __init__(self, cfg: ModelConfig, in_channels: int, rng):
        c = cfg.ch(WEIGHT_PLAN)
        self.c1 = nn.Conv("weight.C1", in_channels, c, rng)
        self.c2 = nn.Conv("weight.C2", c, c, rng)
        self.c3 = nn.Conv("weight.C3", c, cfg.n, rng)

    def convs(self):
        return [self.c1, self.c2, self.c3]

    def forward(self, x):
        self._a1 = nn.relu(self.c1.forward(x))
        self._a2 = nn.relu(self.c2.forward(self._a1))
        return self.c3.forward(self._a2)

    def backward(self, g, grads):
        g = self.c3.backward(g, grads)
        g = self.c2.backward(nn.relu_backward(self._a2, g), grads)
        return self.c1.backward(nn.relu_backward(self._a1, g), grads)


class PixelAggregationNet:
    """Predicts per-pixel sampling offsets and weights, then aggregates.

    ``forward`` takes noisy linear frames ``(B, H, W, F)`` and, for non-blind
    models, a noise-level map ``(B, H, W)``.
    """

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = make_rng(cfg.seed)
        self.grid = build_rigid_grid(cfg.dim, cfg.grid)
        self.partition = contiguous_partition(cfg.n, cfg.groups) if cfg.video else None
        if cfg.mode == "direct":
            head = 1
        elif cfg.learn_offsets:
            head = cfg.n * cfg.dim
        else:
            head = 0
        self.offset_net = OffsetNet(cfg, head, rng)
        self.weight_branch = None
        self.fixed_weights = None
        if cfg.mode == "fixed-weights":
            self.fixed_weights = np.full(cfg.n, 1.0 / cfg.n, dtype=np.float32)
        elif cfg.mode != "direct":
            feat = self.offset_net.feature_channels if cfg.mode != "no-concat" else 0
            self.weight_branch = WeightBranch(cfg, cfg.n + cfg.in_channels + feat, rng)
        scale = [cfg.offset_scale, cfg.offset_scale] + ([float(cfg.tau)] if cfg.dim == 3 else [])
        self.offset_scale = np.array(scale, dtype=np.float32)

    # -- parameters ---------------------------------------------------------

    def _convs(self):
        convs = self.offset_net.convs()
        if self.weight_branch is not None:
            convs += self.weight_branch.convs()
        return convs

    def params(self) -> dict:
        p = {}
        for c in self._convs():
            p.update(c.params())
        if self.fixed_weights is not None:
            p["fixed_weights"] = self.fixed_weights
        return p

    def set_params(self, p: dict):
        for c in self._convs():
            c.set_params(p)
        if self.fixed_weights is not None:
            self.fixed_weights = p["fixed_weights"]

    def zero_params(self):
        self.set_params({k: np.zeros_like(v) for k, v in self.params().items()})

    # -- forward / backward -----------------------------------------------------

    def net_input(self, noisy, noise_map=None):
        if self.cfg.blind:
            return noisy
        if noise_map is None:
            raise InvalidShapeError("non-blind model needs a noise-level map")
        return np.concatenate([noisy, noise_map[..., None].astype(noisy.dtype)], axis=-1)

    def forward(self, noisy, noise_map=None):
        cfg = self.cfg
        noisy = np.asarray(noisy)
        if noisy.ndim != 4 or noisy.shape[-1] != cfg.frames:
            raise InvalidShapeError(f"expected (B, H, W, {cfg.frames}) input, got {noisy.shape}")
        inp = self.net_input(noisy, noise_map)
        head, feat = self.offset_net.forward(inp)
        out = {"features": feat}
        self._state = out
        if cfg.mode == "direct":
            out["y"] = head[..., 0]
            out["groups"] = []
            return out

        b, h, w, _ = noisy.shape
        src = noisy if cfg.video else noisy[..., 0]
        if head is not None:
            raw = np.tanh(head)
            out["raw"] = raw
            offsets = raw.reshape(b, h, w, cfg.n, cfg.dim) * self.offset_scale.astype(raw.dtype)
        else:
            offsets = np.zeros((b, h, w, cfg.n, cfg.dim), dtype=noisy.dtype)
        samples = sample_grid(src, self.grid, offsets)

        if self.weight_branch is not None:
            parts = [samples, inp] + ([feat] if cfg.mode != "no-concat" else [])
            wout = self.weight_branch.forward(np.concatenate(parts, axis=-1))
            if cfg.normalize_weights:
                e = np.exp(wout - wout.max(axis=-1, keepdims=True))
                wout = e / e.sum(axis=-1, keepdims=True)
            weights = wout
        else:
            weights = np.broadcast_to(self.fixed_weights.astype(noisy.dtype), samples.shape)

        prod = samples * weights
        out.update(src=src, offsets=offsets, samples=samples, weights=weights, inp=inp)
        out["y"] = prod.sum(axis=-1)
        out["groups"] = []
        if self.partition is not None:
            s = self.partition.s
            grouped = prod.reshape(b, h, w, s, cfg.n // s)
            out["groups"] = [s * grouped[..., g, :].sum(axis=-1) for g in range(s)]
        return out

    def backward(self, g_y, g_groups=()):
        """Parameter gradients given d loss / d y and d loss / d group outputs."""
        cfg = self.cfg
        st = self._state
        grads = {}
        if cfg.mode == "direct":
            self.offset_net.backward(g_y[..., None], None, grads)
            return grads

        samples, weights = st["samples"], st["weights"]
        b, h, w, n = samples.shape
        up = np.repeat(g_y[..., None], n, axis=-1)
        if g_groups:
            s = self.partition.s
            gg = np.stack(list(g_groups), axis=-1) * s  # (B, H, W, s)
            up = up + np.repeat(gg, n // s, axis=-1)
        g_w = up * samples
        g_s = up * weights

        g_feat = None
        if self.weight_branch is not None:
            if cfg.normalize_weights:
                g_w = weights * (g_w - np.sum(g_w * weights, axis=-1, keepdims=True))
            g_in = self.weight_branch.backward(g_w, grads)
            g_s = g_s + g_in[..., :n]
            if cfg.mode != "no-concat":
                g_feat = g_in[..., n + cfg.in_channels:]
        else:
            grads["fixed_weights"] = g_w.sum(axis=(0, 1, 2))

        g_head = None
        if "raw" in st:
            _, g_off = samples_backward(st["src"], self.grid, st["offsets"], g_s, need_x=False)
            g_raw = (g_off * self.offset_scale).reshape(st["raw"].shape)
            g_head = nn.tanh_backward(st["raw"], g_raw).astype(samples.dtype)
        if g_head is not None or g_feat is not None:
            self.offset_net.backward(g_head, g_feat, grads)
        for k, v in self.params().items():
            grads.setdefault(k, np.zeros_like(v))
        return grads


# -- checkpoints --------------------------------------------------------------

CKPT_MAGIC = b"PXC1"


def save_checkpoint(path, model: PixelAggregationNet, iteration: int = 0):
    """PXC1 magic, u32-length config echo, u64 iteration, u32 count, then
    (u16-length name, PXT1 tensor) per parameter in a fixed order."""
    text = model.cfg.to_text().encode()
    params = model.params()
    buf = io.BytesIO()
    buf.write(CKPT_MAGIC)
    buf.write(struct.pack("<I", len(text)))
    buf.write(text)
    buf.write(struct.pack("<QI", iteration, len(params)))
    for name, p in params.items():
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        write_pxt_stream(buf, p)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    """Returns ``(model, iteration)``."""
    with open(path, "rb") as f:
        data = f.read()
    bio = io.BytesIO(data)

    def take(n, what):
        at = bio.tell()
        out = bio.read(n)
        if len(out) != n:
            raise TruncatedFileError(f"truncated checkpoint {what}", at)
        return out

    if take(4, "magic") != CKPT_MAGIC:
        raise FormatError(f"{path} is not a PXC1 checkpoint", 0)
    (tlen,) = struct.unpack("<I", take(4, "config length"))
    cfg = ModelConfig.from_text(take(tlen, "config").decode())
    iteration, count = struct.unpack("<QI", take(12, "header"))
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = take(nlen, "name").decode()
        params[name] = read_pxt_stream(bio)
    model = PixelAggregationNet(cfg)
    expected = model.params()
    if set(expected) != set(params):
        raise FormatError(f"checkpoint parameters do not match a {cfg.mode} model")
    for k, v in expected.items():
        if params[k].shape != v.shape:
            raise FormatError(f"parameter {k} has shape {params[k].shape}, expected {v.shape}")
    model.set_params({k: np.array(v, dtype=np.float32) for k, v in params.items()})
    return model, int(iteration)


def model_config_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)
