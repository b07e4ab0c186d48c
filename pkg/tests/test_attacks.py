import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shearmark.attacks import (
    PARAM_RANGES, STOCHASTIC, STRENGTH_GRID, AttackError, AttackSpec, apply_attack,
    load_batch, optimization_attack_set, standard_suite,
)
from shearmark.image import Image
from shearmark.metrics import psnr

from conftest import textured


def test_darken():
    out = apply_attack(Image(np.full((8, 8), 200.0)), AttackSpec("darken", {"step": 50}))
    assert np.all(out.samples == 150)
    out = apply_attack(Image(np.full((8, 8), 20.0)), AttackSpec("darken", {"step": 50}))
    assert np.all(out.samples == 0)


def test_salt_pepper_density():
    img = Image(np.full((512, 512), 128.0))
    out = apply_attack(img, AttackSpec("salt_pepper", {"density": 0.10}, seed=3))
    assert np.mean(out.samples != 128) == pytest.approx(0.10, abs=0.01)


def test_jpeg100():
    img = textured(128, 1)
    assert psnr(img, apply_attack(img, AttackSpec("jpeg", {"quality": 100}))) >= 40


def test_range_rejection():
    with pytest.raises(AttackError, match="range"):
        AttackSpec("salt_pepper", {"density": 0.5})
    with pytest.raises(AttackError):
        AttackSpec("rotate")
    with pytest.raises(AttackError):
        AttackSpec("jpeg", {"q": 5})


def test_optimization_set():
    s = optimization_attack_set()
    assert len(s) == 5
    assert [a.kind for a in s] == ["sharpen", "wiener", "resize", "darken", "histeq"]
    assert not any(a.kind in STOCHASTIC for a in s)
    flat = Image(np.full((32, 32), 90.0))
    out = apply_attack(flat, AttackSpec("histeq"))
    assert len(np.unique(out.samples)) == 1


def test_suite_and_grid():
    suite = standard_suite()
    assert len(suite) == 14 and len({a.name for a in suite}) == 14
    for kind, (param, values) in STRENGTH_GRID.items():
        assert len(values) == 10
        lo, hi, _ = PARAM_RANGES[kind][param]
        assert all(lo <= v <= hi for v in values)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(standard_suite()), st.integers(0, 1000))
def test_valid_output_and_reproducible(spec, seed):
    spec = AttackSpec(spec.kind, spec.params, seed)
    img = textured(64, 2, channels=3)
    a, b = apply_attack(img, spec), apply_attack(img, spec)
    assert a.shape == img.shape
    assert np.array_equal(a.samples, b.samples)
    s = a.samples
    assert s.min() >= 0 and s.max() <= 255 and np.array_equal(s, np.round(s))


def test_batch_lists_bad_entries(tmp_path):
    p = tmp_path / "b.json"
    p.write_text(json.dumps([
        {"kind": "jpeg", "params": {"quality": 70}},
        {"kind": "salt_pepper", "params": {"density": 0.5}, "seed": 1},
        {"params": {}},
    ]))
    specs, errors = load_batch(p)
    assert len(specs) == 1 and [i for i, _ in errors] == [1, 2]
    assert "range" in errors[0][1]
