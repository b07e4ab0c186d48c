import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shearmark.attacks import AttackSpec, apply_attack
from shearmark.embed import (
    EmbedError, ThresholdPair, correlate_coefficient, correlation_terms, decode_bit,
    embed_all, embed_auth, embed_copyright, postprocess, preprocess, quantize_target,
)
from shearmark.extract import extract_copyright, extract_tiled
from shearmark.image import save_image
from shearmark.metrics import ber, psnr
from shearmark.texture import uniform_texture

from conftest import KEYS, textured


def test_quantize_examples():
    assert quantize_target(83, 0, 40) == 80
    assert quantize_target(83, 1, 40) == 100
    assert quantize_target(0, 0, 40) == 0
    assert decode_bit(100, 40) == 1 and decode_bit(80, 40) == 0


def test_quantize_half_away_from_zero():
    assert quantize_target(20, 0, 40) == 40
    assert quantize_target(-20, 0, 40) == -40


@settings(max_examples=300, deadline=None)
@given(st.floats(-500, 500), st.integers(0, 1), st.floats(30, 50))
def test_decode_inverts_quantize(c, bit, d):
    assert decode_bit(quantize_target(c, bit, d), d) == bit


def test_compensation():
    phi = np.zeros((4, 4))
    i, j = 1, 0  # zigzag 2
    phi[i, j] = 83.0
    w = np.zeros((1, 1), dtype=np.uint8)
    assert embed_copyright(phi, w, 1.0, 40)[i, j] == pytest.approx(80.0)
    assert embed_copyright(phi, w, 0.6, 40)[i, j] == pytest.approx(81.2)


def test_copyright_touches_only_zigzag2():
    rng = np.random.default_rng(0)
    phi = rng.normal(0, 50, (16, 16))
    w = rng.integers(0, 2, (4, 4))
    out = embed_copyright(phi, w, 0.8, 36)
    mask = np.zeros_like(phi, bool)
    mask[1::4, 0::4] = True
    assert np.array_equal(out[~mask], phi[~mask])


def test_copyright_on_lattice_is_identity():
    rng = np.random.default_rng(1)
    k = rng.integers(-5, 6, (4, 4))
    phi = np.zeros((16, 16))
    phi[1::4, 0::4] = 20.0 * k  # delta'/2 lattice at delta' = 40
    w = decode_bit(phi[1::4, 0::4], 40)
    assert np.array_equal(embed_copyright(phi, w, 0.7, 40), phi)


def test_auth_example():
    rho, theta = correlation_terms(10.0, 4.0, 0.6, 1.0)
    assert rho == pytest.approx(1.1814, abs=1e-4)
    assert theta == pytest.approx(0.6074, abs=1e-4)
    eta = abs(10 + 4 * rho - 9)
    assert eta == pytest.approx(5.7258, abs=5e-4)
    assert correlate_coefficient(9.0, 10.0, 4.0, 1, 0.6, 1.0) == pytest.approx(15.333, abs=1e-3)


def test_auth_condition_not_met():
    assert correlate_coefficient(20.0, 10.0, 4.0, 1, 0.6, 1.0) == 20.0
    assert correlate_coefficient(0.0, 10.0, 4.0, 0, 0.6, 1.0) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-100, 100), st.floats(-50, 50), st.floats(0.1, 30), st.integers(0, 1),
       st.floats(0.6, 1.0), st.floats(0, 2))
def test_auth_sign_property(phi, mu, sigma, bit, xi, dc):
    rho, _ = correlation_terms(mu, sigma, xi, dc)
    out = correlate_coefficient(phi, mu, sigma, bit, xi, dc)
    if bit:
        assert out >= mu + sigma * rho - 1e-6
    else:
        assert out <= mu - sigma * rho + 1e-6


def test_epsilon_guard_on_constant():
    state, kept = preprocess(np.full((32, 32), 100.0))
    assert np.allclose(state.sigma, 0)
    w = np.ones((4, 4), dtype=np.uint8)
    out = embed_auth(state.phi_d, state.mu, state.sigma, w, 0.6, 1.0, state.side)
    assert np.all(np.isfinite(out))
    # phi == mu == mu + sigma*rho, so the strict condition never fires
    assert np.array_equal(out, state.phi_d)


def test_auth_touches_only_dc():
    state, _ = preprocess(textured(32, 2).luma())
    w = np.random.default_rng(0).integers(0, 2, (4, 4))
    out = embed_auth(state.phi_d, state.mu, state.sigma, w, 0.8, 0.5, state.side)
    mask = np.zeros(out.shape, bool)
    mask[:, ::4, ::4] = True
    assert np.array_equal(out[~mask], state.phi_d[~mask])


def test_pass_through_exact(gray128):
    state, kept = preprocess(gray128.luma())
    assert np.array_equal(postprocess(state, kept), gray128.luma())
    assert set(np.unique(state.kappa)) == set(range(6))


def test_threshold_bounds():
    ThresholdPair(30, 0)
    ThresholdPair(50, 2)
    with pytest.raises(EmbedError):
        ThresholdPair(29.9, 1)
    with pytest.raises(EmbedError):
        ThresholdPair(40, 2.1)


@pytest.mark.parametrize("mode", ["copyright", "auth", "dual"])
def test_modes_round_trip(gray128, marks128, mode):
    res = embed_all(gray128, marks128, None, ThresholdPair(36, 0.5), mode)
    assert res.image.shape == gray128.shape
    assert psnr(gray128, res.image) > 30
    if mode != "auth":
        cr = extract_copyright(res.image, KEYS, 36)
        assert ber(cr.logo, marks128.logo) == 0
        assert ber(cr.tiled, marks128.copyright) == 0


def test_color_round_trip(marks128):
    img = textured(128, 5, channels=3)
    res = embed_all(img, marks128, None, ThresholdPair(40, 0.5), "dual")
    assert res.image.channels == 3
    assert ber(extract_copyright(res.image, KEYS, 40).logo, marks128.logo) == 0


def test_wrong_mark_size(gray128, marks128):
    from shearmark.marks import prepare_marks, default_logo
    small = prepare_marks(default_logo(4, 4), KEYS, 64, 64)
    with pytest.raises(EmbedError):
        embed_all(gray128, small, None, ThresholdPair(36, 0), "dual")
    with pytest.raises(EmbedError):
        embed_all(gray128, marks128, None, ThresholdPair(36, 0), "both")


def test_deterministic_bytes(gray128, marks128, tmp_path):
    a = embed_all(gray128, marks128, None, ThresholdPair(36, 0.5), "dual").image
    b = embed_all(gray128, marks128, None, ThresholdPair(36, 0.5), "dual").image
    save_image(a, tmp_path / "a.png")
    save_image(b, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_larger_step_is_more_robust(gray128, marks128):
    tex = uniform_texture((16, 16), 1.0)
    jpeg = AttackSpec("jpeg", {"quality": 50})
    errs = []
    for d in (30, 40, 50):
        wm = embed_all(gray128, marks128, tex, ThresholdPair(d, 0), "copyright").image
        errs.append(ber(extract_tiled(apply_attack(wm, jpeg), d), marks128.copyright))
    assert errs[0] >= errs[1] >= errs[2]


def test_direct_realization_runs(gray128, marks128):
    res = embed_all(gray128, marks128, None, ThresholdPair(36, 0.5), "dual", realization="direct")
    s = res.image.samples
    assert s.min() >= 0 and s.max() <= 255 and np.array_equal(s, np.round(s))
