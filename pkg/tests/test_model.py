import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import rel_err
from pixagg.errors import ConfigError, FormatError, InvalidShapeError, TruncatedFileError
from pixagg.model import MODES, ModelConfig, PixelAggregationNet, WeightBranch, load_checkpoint, save_checkpoint
from pixagg.tensor import make_rng


def _inputs(rng, model, h=16, w=16, b=1):
    x = rng.uniform(0.05, 0.9, (b, h, w, model.cfg.frames)).astype(np.float32)
    return x, np.full((b, h, w), 0.1, dtype=np.float32)


def test_config_defaults():
    st_cfg = ModelConfig()
    assert (st_cfg.mode, st_cfg.grid, st_cfg.n, st_cfg.dim, st_cfg.groups, st_cfg.frames) == ("stpan", (3, 3, 3), 27, 3, 3, 5)
    pan = ModelConfig(mode="pan")
    assert pan.grid == (5, 5) and pan.n == 25 and pan.frames == 1


@pytest.mark.parametrize("kw", [{"mode": "kpn"}, {"mode": "pan", "grid": (3, 3, 3)}, {"groups": 4}, {"width_mult": 0}])
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        ModelConfig(**kw)


def test_config_text_round_trip():
    cfg = ModelConfig(mode="no-concat", width_mult=0.25, tau=1, blind=True, offset_scale=4.0, seed=9)
    text = cfg.to_text()
    assert "n=27" in text and "d=3" in text
    assert ModelConfig.from_text(text) == cfg


def test_full_width_channel_plan():
    m = PixelAggregationNet(ModelConfig(width_mult=1.0))
    assert m.offset_net.head.kernel.shape[0] == 81
    assert m.weight_branch.c3.kernel.shape[0] == 27
    assert m.weight_branch.c1.kernel.shape[1] == 27 + 5 + 1 + 128
    assert m.offset_net.enc[3].convs[-1].kernel.shape[0] == 512


def test_desk_width_plan():
    m = PixelAggregationNet(ModelConfig())
    widths = [c.kernel.shape[0] for c in m.offset_net.convs()[:-1]]
    assert widths == [8] * 3 + [16] * 3 + [32] * 3 + [64] * 6 + [64] * 3 + [32] * 3 + [16] * 3 + [16] * 2


def test_mode_structure():
    assert PixelAggregationNet(ModelConfig(mode="rigid")).offset_net.head is None
    direct = PixelAggregationNet(ModelConfig(mode="direct"))
    assert direct.weight_branch is None and direct.offset_net.head.kernel.shape[0] == 1
    fixed = PixelAggregationNet(ModelConfig(mode="fixed-weights"))
    np.testing.assert_allclose(fixed.params()["fixed_weights"], 1 / 27)
    nc = PixelAggregationNet(ModelConfig(mode="no-concat"))
    assert nc.weight_branch.c1.kernel.shape[1] == 27 + 6
    pan = PixelAggregationNet(ModelConfig(mode="pan"))
    assert pan.offset_net.head.kernel.shape[0] == 50 and pan.partition is None


def test_seeded_init():
    a = PixelAggregationNet(ModelConfig(seed=3)).params()
    b = PixelAggregationNet(ModelConfig(seed=3)).params()
    c = PixelAggregationNet(ModelConfig(seed=4)).params()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not all(np.array_equal(a[k], c[k]) for k in a)


@pytest.mark.parametrize("mode", [m for m in MODES if m != "direct"])
def test_zero_network_is_rigid_with_zero_output(mode, rng):
    m = PixelAggregationNet(ModelConfig(mode=mode))
    m.zero_params()
    x, nmap = _inputs(rng, m)
    out = m.forward(x, nmap)
    np.testing.assert_array_equal(out["offsets"], 0.0)
    if mode != "fixed-weights":
        np.testing.assert_array_equal(out["weights"], 0.0)
        np.testing.assert_array_equal(out["y"], 0.0)


@settings(max_examples=10)
@given(st.floats(1.0, 20.0), st.integers(0, 1000))
def test_offsets_bounded(scale, seed):
    m = PixelAggregationNet(ModelConfig(seed=seed))
    m.set_params({k: v * np.float32(scale) for k, v in m.params().items()})
    x, nmap = _inputs(np.random.default_rng(seed), m, 8, 8)
    off = m.forward(x, nmap)["offsets"]
    assert np.all(np.abs(off[..., :2]) <= 8.0) and np.all(np.abs(off[..., 2]) <= 2.0)


def test_groups_recombine_to_output(rng):
    m = PixelAggregationNet(ModelConfig())
    x, nmap = _inputs(rng, m, b=2)
    out = m.forward(x, nmap)
    assert len(out["groups"]) == 3
    np.testing.assert_allclose(sum(out["groups"]) / 3, out["y"], atol=1e-5)


def test_forward_errors(rng):
    m = PixelAggregationNet(ModelConfig())
    x, nmap = _inputs(rng, m, 12, 16)
    with pytest.raises(InvalidShapeError):
        m.forward(x, nmap)
    x, nmap = _inputs(rng, m)
    with pytest.raises(InvalidShapeError):
        m.forward(x, None)
    with pytest.raises(InvalidShapeError):
        m.forward(x[..., :3], nmap)


def test_arbitrary_size_accepted(rng):
    m = PixelAggregationNet(ModelConfig())
    x, nmap = _inputs(rng, m, 48, 80)
    assert m.forward(x, nmap)["y"].shape == (1, 48, 80)


def test_blind_model_ignores_noise_map(rng):
    m = PixelAggregationNet(ModelConfig(blind=True))
    x, _ = _inputs(rng, m)
    assert m.offset_net.enc[0].convs[0].kernel.shape[1] == 5
    np.testing.assert_array_equal(m.forward(x)["y"], m.forward(x, np.ones((1, 16, 16)))["y"])


def _float64(model):
    model.set_params({k: v.astype(np.float64) for k, v in model.params().items()})
    return model


def _smooth_fd(model, x, nmap, up, ups, rng, count, eps=1e-6):
    def objective(o):
        return float(np.sum(up * o["y"]) + sum(np.sum(a * b) for a, b in zip(ups, o["groups"])))

    out = model.forward(x, nmap)
    grads = model.backward(up, ups if out["groups"] else [])
    params = model.params()
    keys = sorted(params)
    an, fd = [], []
    for _ in range(count):
        k = keys[rng.integers(len(keys))]
        idx = tuple(int(rng.integers(s)) for s in params[k].shape)
        old = params[k][idx]
        vals = []
        for e in (eps, -eps):
            params[k][idx] = old + e
            vals.append(objective(model.forward(x, nmap)))
        params[k][idx] = old
        an.append(grads[k][idx])
        fd.append((vals[0] - vals[1]) / (2 * eps))
    return np.array(an), np.array(fd)


@pytest.mark.parametrize("mode", MODES)
def test_parameter_gradients_every_mode(mode):
    rng = np.random.default_rng(MODES.index(mode))
    m = _float64(PixelAggregationNet(ModelConfig(mode=mode, seed=1)))
    x = rng.uniform(0.05, 0.9, (1, 16, 16, m.cfg.frames))
    up = rng.normal(size=(1, 16, 16))
    ups = [rng.normal(size=(1, 16, 16)) for _ in range(3)]
    an, fd = _smooth_fd(m, x, np.full((1, 16, 16), 0.1), up, ups, rng, 20)
    assert rel_err(an, fd) < 1e-4


@pytest.mark.parametrize("seed", range(50))
def test_weight_branch_gradient_fd(seed):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(width_mult=0.0625)
    branch = WeightBranch(cfg, 7, make_rng(seed))
    for c in branch.convs():
        c.kernel = c.kernel.astype(np.float64)
        c.bias = c.bias.astype(np.float64)
    x = rng.normal(size=(1, 4, 4, 7))
    up = rng.normal(size=(1, 4, 4, 27))
    branch.forward(x)
    grads = {}
    gx = branch.backward(up, grads)

    def f(z):
        return float(np.sum(up * branch.forward(z)))

    eps = 1e-6
    idx = [tuple(rng.integers(s) for s in x.shape) for _ in range(10)]
    fd = []
    for i in idx:
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        fd.append((f(xp) - f(xm)) / (2 * eps))
    assert rel_err([gx[i] for i in idx], fd) < 1e-4
    k = branch.c1.kernel
    kidx = [tuple(rng.integers(s) for s in k.shape) for _ in range(10)]
    fd = []
    for i in kidx:
        old = k[i]
        k[i] = old + eps
        fp = f(x)
        k[i] = old - eps
        fm = f(x)
        k[i] = old
        fd.append((fp - fm) / (2 * eps))
    assert rel_err([grads["weight.C1.kernel"][i] for i in kidx], fd) < 1e-4


def test_checkpoint_round_trip(tmp_path, rng):
    m = PixelAggregationNet(ModelConfig(mode="fixed-weights", tau=1, seed=5))
    path = tmp_path / "m.pxc"
    save_checkpoint(path, m, iteration=123)
    loaded, it = load_checkpoint(path)
    assert it == 123 and loaded.cfg == m.cfg
    for k, v in m.params().items():
        np.testing.assert_array_equal(loaded.params()[k], v)
    raw = path.read_bytes()
    assert raw[:4] == b"PXC1"
    text = raw[8:8 + int.from_bytes(raw[4:8], "little")].decode()
    for key in ("width_mult=", "n=27", "d=3", "tau=1", "blind=false", "offset_scale="):
        assert key in text


def test_checkpoint_errors(tmp_path):
    path = tmp_path / "m.pxc"
    save_checkpoint(path, PixelAggregationNet(ModelConfig(mode="rigid")), 0)
    raw = path.read_bytes()
    (tmp_path / "short.pxc").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(TruncatedFileError):
        load_checkpoint(tmp_path / "short.pxc")
    (tmp_path / "magic.pxc").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "magic.pxc")


@pytest.mark.xfail(strict=True, reason="a 1e-2 parameter step crosses ReLU and sampling kinks")
def test_end_to_end_gradient_coarse_step():
    from test_acceptance import _end_to_end_error

    errs = [_end_to_end_error(seed, 1e-2) for seed in range(5)]
    assert max(errs) < 5e-3
