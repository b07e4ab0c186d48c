import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shearmark.embed import DEFAULT_THRESHOLDS, embed_all
from shearmark.extract import (
    MetadataError, block_feature_vectors, close_square, extract_auth, extract_copyright,
    extract_tiled, read_sidecar, remove_small, tamper_map, train_extractor, weighted_vote,
    write_sidecar,
)
from shearmark.image import Image
from shearmark.marks import default_logo, prepare_marks, recover_logo
from shearmark.metrics import ber

from conftest import KEYS, textured


@pytest.fixture(scope="module")
def wm256():
    img = textured(256, 9)
    marks = prepare_marks(default_logo(16, 16), KEYS, 256, 256)
    return img, marks, embed_all(img, marks, None, DEFAULT_THRESHOLDS, "dual").image


def test_features_shape_finite(wm256):
    F = block_feature_vectors(wm256[2])
    assert F.shape == (1024, 8) and np.all(np.isfinite(F))


def test_clean_round_trip(wm256):
    img, marks, wm = wm256
    model = train_extractor(wm, marks.auth, seed=0)
    assert 1 - model.history["test_error"] >= 0.99
    assert ber(extract_auth(model, wm), marks.auth) <= 0.01
    cr = extract_copyright(wm, KEYS, DEFAULT_THRESHOLDS.delta_q)
    assert ber(cr.logo, marks.logo) == 0


def test_training_deterministic(wm256):
    _, marks, wm = wm256
    a = train_extractor(wm, marks.auth, seed=5)
    b = train_extractor(wm, marks.auth, seed=5)
    for x, y in zip(a.weights, b.weights):
        assert np.array_equal(x, y)
    assert np.array_equal(extract_auth(a, wm), extract_auth(b, wm))


def test_noise_image_is_chance():
    rng = np.random.default_rng(1)
    noise = Image(rng.integers(0, 256, (512, 512)).astype(float))
    w = prepare_marks(default_logo(32, 32), KEYS, 512, 512).auth
    model = train_extractor(noise, w, seed=0)
    assert abs(np.mean(model.history["fold_errors"]) - 0.5) <= 0.05


def test_splice_randomizes_bits(wm256):
    img, marks, wm = wm256
    s = wm.samples.copy()
    donor = textured(256, 77).samples
    s[64:192, 64:192] = donor[64:192, 64:192]
    spliced = Image(s)
    model = train_extractor(spliced, marks.auth, seed=0)
    got = extract_auth(model, spliced)
    inner = (got != marks.auth)[9:23, 9:23]
    outer = np.ones((32, 32), bool)
    outer[7:25, 7:25] = False
    assert 0.3 <= inner.mean() <= 0.7
    assert (got != marks.auth)[outer].mean() < 0.1


def test_missing_delta():
    with pytest.raises(MetadataError):
        extract_tiled(np.zeros((32, 32)), None)


def test_tamper_map_examples():
    w = np.random.default_rng(0).integers(0, 2, (64, 64))
    assert not tamper_map(w, w).map.any()
    x = w.copy()
    x[10, 10] ^= 1
    assert not tamper_map(x, w).map.any()
    m = np.zeros((64, 64), bool)
    m[20:32, 20:32] = True
    m[24, 24] = m[27, 29] = False
    assert np.array_equal(close_square(remove_small(m)), np.pad(np.ones((12, 12), bool), ((20, 32), (20, 32))))


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, (24, 24), elements=st.integers(0, 1)),
       arrays(np.uint8, (24, 24), elements=st.integers(0, 1)))
def test_tamper_monotone(raw, extra):
    # adding mismatches never shrinks the closed map, outside what the area filter drops
    w = np.zeros((24, 24), np.uint8)
    small = tamper_map(raw, w).map.astype(bool)
    big = tamper_map(raw | extra, w).map.astype(bool)
    kept = remove_small(raw.astype(bool))
    assert not np.any(close_square(kept) & ~big)
    assert np.all(small <= close_square(kept))


def test_tamper_scores():
    t = np.zeros((8, 8), np.uint8)
    t[2:6, 2:6] = 1
    rep = tamper_map(t, np.zeros_like(t), truth=t)
    d = rep.as_dict()
    assert d["tpr"] == 1.0 and d["fpr"] == 0.0 and d["tampered_blocks"] == 16


def test_vote_examples():
    # one logo bit, four copies laid out 2x2
    tiled = np.array([[1, 0], [1, 0]])  # copies at (0,0),(1,0),(0,1),(1,1) -> 1,1,0,0
    P = np.array([[0.9, 0.1], [0.8, 0.2]])
    assert weighted_vote(tiled, P)[0, 0] == 1
    assert weighted_vote(np.array([[1, 0], [0, 1]]), np.full((2, 2), 0.5))[0, 0] == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(0, 2**31))
def test_one_randomized_copy_is_outvoted(which, seed):
    rng = np.random.default_rng(seed)
    shuffled = rng.integers(0, 2, (16, 16)).astype(np.uint8)
    tiled = np.tile(shuffled, (2, 2))
    P = rng.uniform(0.5, 1.0, (32, 32))
    rs, cs = [(slice(0, 16), slice(0, 16)), (slice(16, 32), slice(0, 16)),
              (slice(0, 16), slice(16, 32)), (slice(16, 32), slice(16, 32))][which]
    tiled[rs, cs] = rng.integers(0, 2, (16, 16))
    P[rs, cs] = rng.uniform(0.0, 0.5, (16, 16))
    voted = weighted_vote(tiled, P)
    assert np.array_equal(voted, shuffled)
    assert np.array_equal(recover_logo(voted, KEYS), recover_logo(shuffled, KEYS))


def test_sidecar_round_trip(tmp_path):
    p = tmp_path / "x.png.meta"
    meta = {"delta_prime": 36.25, "delta_dprime": 0.5, "mode": "dual", "block": 8, "image_hash": "ab"}
    write_sidecar(p, meta)
    back = read_sidecar(p)
    assert back["delta_prime"] == 36.25 and back["block"] == 8 and back["mode"] == "dual"
    with pytest.raises(MetadataError):
        read_sidecar(tmp_path / "none.meta")
    p.write_text("delta_prime=36\n")
    with pytest.raises(MetadataError):
        read_sidecar(p)
