import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shearmark.transforms import (
    N_DIRECTIONS, ShearletPyramid, TransformError, dct_block, dst_forward, dst_inverse,
    idct_block, lwt_forward, lwt_inverse, shearlet_system, zigzag_index,
)


def test_window_count_and_partition_of_unity():
    s = shearlet_system(64, 96)
    assert s.count == 7
    assert s.frame_bound_error() <= 1e-9


def test_band_shapes():
    pyr = dst_forward(np.random.default_rng(0).uniform(0, 255, (512, 512)))
    assert pyr.approx.shape == (512, 512)
    assert pyr.details.shape == (N_DIRECTIONS, 512, 512)


def test_constant_has_no_detail():
    pyr = dst_forward(np.full((64, 64), 128.0))
    assert np.max(np.abs(pyr.details)) <= 1e-6
    assert np.allclose(pyr.approx, 128.0)


def test_zero_pyramid():
    z = ShearletPyramid(np.zeros((32, 32)), np.zeros((6, 32, 32)))
    assert np.array_equal(dst_inverse(z), np.zeros((32, 32)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([(16, 16), (32, 48), (64, 32)]))
def test_dst_round_trip(seed, shape):
    x = np.random.default_rng(seed).uniform(0, 255, shape)
    assert np.max(np.abs(dst_inverse(dst_forward(x)) - x)) <= 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(-3, 3))
def test_dst_linear(seed, a):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(32, 32)), rng.normal(size=(32, 32))
    lhs = dst_forward(a * x + y).bands()
    rhs = a * dst_forward(x).bands() + dst_forward(y).bands()
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_lowpass_change_bounded():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 255, (64, 64))
    pyr = dst_forward(x)
    d = rng.normal(size=(64, 64))
    y = dst_inverse(ShearletPyramid(pyr.approx + d, pyr.details))
    # a Parseval frame synthesis operator has norm <= 1
    assert np.linalg.norm(y - x) <= np.linalg.norm(d) + 1e-9


def test_dst_rejects_odd_or_tiny():
    with pytest.raises(TransformError):
        dst_forward(np.zeros((15, 16)))
    with pytest.raises(TransformError):
        dst_forward(np.zeros((8, 8)))


def test_lwt_constant():
    q = lwt_forward(np.full((8, 6), 42.0))
    assert np.all(q.LL == 42.0)
    for b in (q.LH, q.HL, q.HH):
        assert np.all(b == 0)


def test_lwt_shapes():
    q = lwt_forward(np.zeros((512, 512)))
    assert q.LL.shape == q.LH.shape == q.HL.shape == q.HH.shape == (256, 256)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_lwt_round_trip(seed):
    x = np.random.default_rng(seed).uniform(-500, 500, (16, 24))
    assert np.max(np.abs(lwt_inverse(lwt_forward(x)) - x)) <= 1e-9


def test_dct_constant_block():
    c = dct_block(np.full((4, 4), 9.0))
    assert c[0, 0] == pytest.approx(36.0)
    c[0, 0] = 0
    assert np.max(np.abs(c)) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_dct_parseval_and_inverse(seed):
    x = np.random.default_rng(seed).normal(size=(16, 8))
    c = dct_block(x)
    assert abs(np.sum(c**2) - np.sum(x**2)) <= 1e-9 * max(1, np.sum(x**2))
    assert np.allclose(idct_block(c), x, atol=1e-12)


def test_zigzag():
    assert zigzag_index(4, 0) == (0, 0)
    assert zigzag_index(4, 1) == (0, 1)
    assert zigzag_index(4, 2) == (1, 0)
    assert zigzag_index(4, 15) == (3, 3)
    with pytest.raises(TransformError):
        zigzag_index(4, 16)
