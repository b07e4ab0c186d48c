import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays

from shearmark.image import (
    Image, ImageError, from_blocks, from_ycocg, load_image, partition, replace_luma,
    save_image, to_blocks, to_ycocg,
)


def test_pgm_and_png_shapes(tmp_path):
    g = Image(np.random.default_rng(0).integers(0, 256, (512, 512)).astype(float))
    save_image(g, tmp_path / "a.pgm")
    g2 = load_image(tmp_path / "a.pgm")
    assert (g2.rows, g2.cols, g2.channels) == (512, 512, 1)
    c = Image(np.random.default_rng(1).integers(0, 256, (512, 512, 3)).astype(float))
    save_image(c, tmp_path / "c.png")
    back = load_image(tmp_path / "c.png")
    assert back.shape == (512, 512, 3)
    assert np.array_equal(back.samples, c.samples)


def test_truncated_file_is_corrupt(tmp_path):
    g = Image(np.full((64, 64), 7.0))
    save_image(g, tmp_path / "a.png")
    data = (tmp_path / "a.png").read_bytes()
    (tmp_path / "t.png").write_bytes(data[: len(data) // 3])
    with pytest.raises(ImageError, match="corrupt"):
        load_image(tmp_path / "t.png")


def test_missing_file(tmp_path):
    with pytest.raises(ImageError):
        load_image(tmp_path / "nope.png")


def test_samples_out_of_range_rejected():
    with pytest.raises(ImageError):
        Image(np.full((8, 8), 300.0))


def test_gray_pixel_ycocg():
    p = to_ycocg(Image(np.full((2, 2, 3), 77.0)))
    assert np.all(p.Y == 77) and np.all(p.Co == 0) and np.all(p.Cg == 0)


def test_ycocg_needs_color():
    with pytest.raises(ImageError):
        to_ycocg(Image(np.zeros((4, 4))))


@settings(max_examples=50, deadline=None)
@given(arrays(np.uint8, (6, 5, 3)))
def test_ycocg_round_trip_exact(a):
    img = Image(a.astype(float))
    assert np.array_equal(from_ycocg(to_ycocg(img)).samples, img.samples)


def test_replace_luma_keeps_chroma():
    rng = np.random.default_rng(3)
    img = Image(rng.integers(0, 256, (16, 16, 3)).astype(float))
    y = to_ycocg(img).Y
    out = replace_luma(img, y.astype(float))
    assert np.array_equal(out.samples, img.samples)


def test_partition_examples():
    g = partition(Image(np.zeros((512, 512))), 8)
    assert (g.rows, g.cols, g.count) == (64, 64, 4096)
    assert partition(Image(np.zeros((16, 16))), 8).count == 4
    with pytest.raises(ImageError):
        partition(Image(np.zeros((510, 512))), 8)


def test_block_order_covers_pixels():
    x = np.arange(32 * 24, dtype=float).reshape(32, 24)
    b = to_blocks(x, 8)
    # block (i, j) covers rows 8i..8i+7, cols 8j..8j+7
    assert np.array_equal(b[2, 1], x[16:24, 8:16])
    assert np.array_equal(from_blocks(b), x)
