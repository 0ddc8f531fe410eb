import numpy as np
import pytest

from lanelock.raster import RasterError, load_png, require_raster, save_png, to_gray


def test_require_raster_accepts_gray_and_rgb():
    require_raster(np.zeros((4, 5), dtype=np.uint8))
    require_raster(np.zeros((4, 5, 3), dtype=np.uint8), channels=3)


@pytest.mark.parametrize(
    "bad",
    [
        np.zeros((4, 5), dtype=np.float64),
        np.zeros((4, 5, 2), dtype=np.uint8),
        np.zeros((0, 5), dtype=np.uint8),
        np.zeros((4,), dtype=np.uint8),
    ],
)
def test_require_raster_rejects(bad):
    with pytest.raises(RasterError):
        require_raster(bad)


def test_require_raster_channel_mismatch():
    with pytest.raises(RasterError):
        require_raster(np.zeros((4, 5), dtype=np.uint8), channels=3)


def test_to_gray_luma_formula():
    img = np.zeros((1, 3, 3), dtype=np.uint8)
    img[0, 0] = (255, 0, 0)
    img[0, 1] = (0, 255, 0)
    img[0, 2] = (10, 20, 30)
    g = to_gray(img)
    assert g[0, 0] == int(np.floor(0.299 * 255 + 0.5))
    assert g[0, 1] == int(np.floor(0.587 * 255 + 0.5))
    assert g[0, 2] == int(np.floor(0.299 * 10 + 0.587 * 20 + 0.114 * 30 + 0.5))


def test_to_gray_passthrough_single_channel():
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    assert to_gray(img) is img


def test_png_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, size=(20, 30, 3)).astype(np.uint8)
    save_png(img, tmp_path / "x.png")
    back = load_png(tmp_path / "x.png")
    assert np.array_equal(img, back)


def test_load_png_rejects_non_png(tmp_path):
    p = tmp_path / "fake.png"
    p.write_bytes(b"not an image")
    with pytest.raises(RasterError):
        load_png(p)
