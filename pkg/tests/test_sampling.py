import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import central_diff, naive_sample, rel_err
from pixagg.errors import InvalidShapeError
from pixagg.sampling import (
    bilinear_sample,
    sample_points,
    sample_points_backward,
    trilinear_backward,
    trilinear_sample,
)

X22 = np.array([[0, 1], [2, 3]], dtype=np.float64)


def test_bilinear_examples():
    assert bilinear_sample(X22, (0, 0)) == 0.0
    assert bilinear_sample(X22, (0.5, 0.5)) == 1.5
    assert bilinear_sample(X22, (-5, -5)) == 0.0
    assert bilinear_sample(X22, (1, 1)) == 3.0


def test_bilinear_partial_overlap_is_zero_padded():
    # half a pixel outside: only the in-bounds corners contribute
    assert bilinear_sample(X22, (-0.5, 0)) == pytest.approx(0.5 * X22[0, 0])
    assert bilinear_sample(X22, (1.25, 1)) == pytest.approx(0.75 * X22[1, 1])


def test_rank_errors():
    with pytest.raises(InvalidShapeError):
        bilinear_sample(np.zeros((2, 2, 2)), (0, 0))
    with pytest.raises(InvalidShapeError):
        trilinear_sample(np.zeros((2, 2)), (0, 0, 0))


def test_trilinear_examples(rng):
    x = rng.random((4, 5, 3))
    assert trilinear_sample(x, (2, 3, 1)) == x[2, 3, 1]
    assert trilinear_sample(x, (2, 3, 0.5)) == pytest.approx((x[2, 3, 0] + x[2, 3, 1]) / 2)
    assert trilinear_sample(x, (2, 3, 3 + 2)) == 0.0


@given(
    arrays(np.float64, (3, 4, 3), elements=st.floats(-2, 2)),
    st.tuples(st.floats(-2, 4), st.floats(-2, 5), st.floats(-2, 4)),
)
def test_trilinear_matches_naive_sum(x, p):
    assert trilinear_sample(x, p) == pytest.approx(naive_sample(x, p), abs=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_batched_sampling_matches_scalar(seed):
    rng = np.random.default_rng(seed)
    x = rng.random((2, 5, 4))
    pts = rng.uniform(-1.5, 5.5, (2, 7, 2))
    out = sample_points(x, pts)
    for b in range(2):
        for m in range(7):
            assert out[b, m] == pytest.approx(naive_sample(x[b], pts[b, m]), abs=1e-12)


def test_sampling_keeps_dtype(rng):
    x = rng.random((4, 4)).astype(np.float32)
    assert sample_points(x, rng.uniform(0, 3, (5, 2))).dtype == np.float32


def test_backward_partition_of_unity(rng):
    x = rng.random((6, 6, 5))
    grads, _ = trilinear_backward(x, (2.3, 3.6, 1.4), 1.0)
    w = [v for _, v in grads]
    assert len(w) == 8
    assert sum(w) == pytest.approx(1.0)
    assert all(0 <= v <= 1 for v in w)


def test_backward_flat_field_has_no_coordinate_gradient():
    _, gp = trilinear_backward(np.full((6, 6, 5), 0.7), (2.3, 3.6, 1.4), 1.0)
    assert gp == pytest.approx((0.0, 0.0, 0.0), abs=1e-12)


def test_backward_kink_convention():
    x = np.arange(36.0).reshape(6, 6)
    _, gc = sample_points_backward(x, np.array([[2.0, 3.0]]), np.ones(1))
    np.testing.assert_array_equal(gc, 0.0)


def _interior_point(rng, shape):
    while True:
        p = rng.uniform(0.2, np.array(shape) - 1.2)
        frac = p - np.floor(p)
        if np.all((frac > 0.05) & (frac < 0.95)):
            return p


@pytest.mark.parametrize("seed", range(50))
def test_trilinear_coordinate_gradient_fd(seed):
    rng = np.random.default_rng(seed)
    x = rng.random((6, 6, 5))
    p = _interior_point(rng, x.shape)
    up = rng.uniform(0.5, 2.0)
    _, gp = trilinear_backward(x, p, up)
    fd = central_diff(lambda q: up * trilinear_sample(x, q), p, 1e-3)
    assert rel_err(gp, fd) < 1e-4


@pytest.mark.parametrize("seed", range(50))
def test_trilinear_value_gradient_fd(seed):
    rng = np.random.default_rng(100 + seed)
    x = rng.random((4, 4, 3))
    p = rng.uniform(-0.8, 3.8, 3)
    up = rng.normal()
    sparse, _ = trilinear_backward(x, p, up)
    dense = np.zeros_like(x)
    for idx, v in sparse:
        dense[idx] += v
    fd = central_diff(lambda z: up * trilinear_sample(z, p), x, 1e-3)
    np.testing.assert_allclose(dense, fd, atol=1e-9)


def test_backward_out_of_range_is_zero():
    x = np.ones((3, 3, 3))
    sparse, gp = trilinear_backward(x, (-4.0, 1.5, 1.5), 1.0)
    assert sum(v for _, v in sparse) == 0.0
    assert gp == (0.0, 0.0, 0.0)
