import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from provmark.errors import MalformedFile, UnsupportedFormat
from provmark.imaging import (
    ImagePlane, ResizeMethod, RgbImage, block_dct, block_idct, from_luma, load_image, resize,
    save_image, to_luma,
)


def _png(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr.astype(np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def test_load_white_png():
    img = load_image(_png(np.full((2, 2, 3), 255)))
    assert img.size == (2, 2)
    assert np.all(img.samples == 1.0)


def test_load_scales_by_255():
    arr = np.zeros((2, 2, 3))
    arr[0, 0] = (51, 102, 204)
    img = load_image(_png(arr))
    np.testing.assert_allclose(img.samples[0, 0], (0.2, 0.4, 0.8), atol=1e-15)


def test_truncated_jpeg_is_malformed(photo):
    data = save_image(photo, "JPEG", 90)
    with pytest.raises(MalformedFile):
        load_image(data[: len(data) // 2])


def test_garbage_and_other_formats():
    with pytest.raises(MalformedFile):
        load_image(b"definitely not an image")
    buf = io.BytesIO()
    Image.new("RGB", (4, 4)).save(buf, format="BMP")
    with pytest.raises(UnsupportedFormat):
        load_image(buf.getvalue())


def test_grayscale_png_expands_to_three_channels():
    img = load_image(_png(np.full((3, 5), 128)))
    assert img.samples.shape == (3, 5, 3)
    np.testing.assert_allclose(img.samples, 128 / 255)


def test_png_round_trip_is_bit_exact(photo):
    a = load_image(save_image(photo))
    b = load_image(save_image(a))
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.to_uint8(), photo.to_uint8())


def test_samples_clamped_and_immutable():
    img = RgbImage(np.full((4, 4, 3), 1.7))
    assert img.samples.max() == 1.0
    with pytest.raises(ValueError):
        img.samples[0, 0, 0] = 0.0
    with pytest.raises(ValueError):
        RgbImage(np.full((4, 4, 3), np.nan))


@pytest.mark.parametrize("method", list(ResizeMethod))
def test_resize_same_size_is_identity(photo, method):
    out = resize(photo, photo.width, photo.height, method)
    assert np.max(np.abs(out.samples - photo.samples)) <= 1 / 510


@pytest.mark.parametrize("size", [(1, 1), (7, 3), (64, 64), (1000, 37)])
def test_resize_constant(size):
    img = RgbImage(np.full((20, 30, 3), 0.5))
    out = resize(img, *size, ResizeMethod.BICUBIC)
    assert out.size == size
    np.testing.assert_allclose(out.samples, 0.5, atol=1e-12)


def test_bilinear_halving_is_block_mean():
    ramp = np.arange(16, dtype=float).reshape(4, 4) / 15.0
    img = RgbImage(np.repeat(ramp[:, :, None], 3, axis=2))
    out = resize(img, 2, 2, ResizeMethod.BILINEAR).samples[:, :, 0]
    # sample centres land midway between source pixels: equal 2x2 weights
    expected = ramp.reshape(2, 2, 2, 2).mean(axis=(1, 3))
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_bicubic_kernel_value():
    # upsampling an impulse by 2 samples the kernel at 0.25, 0.75 and 1.25
    a = -0.5
    k = lambda t: (a + 2) * t**3 - (a + 3) * t**2 + 1  # noqa: E731
    far = lambda t: a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a  # noqa: E731
    row = np.zeros(9)
    row[4] = 1.0
    img = RgbImage(np.repeat(np.tile(row, (9, 1))[:, :, None], 3, axis=2) * 0.5 + 0.25)
    out = resize(img, 18, 9, ResizeMethod.BICUBIC).samples[4, :, 0]
    # output x maps to source (x + 0.5) / 2 - 0.5
    np.testing.assert_allclose((out[[8, 9]] - 0.25) / 0.5, k(0.25), atol=1e-12)
    np.testing.assert_allclose((out[[7, 10]] - 0.25) / 0.5, k(0.75), atol=1e-12)
    np.testing.assert_allclose((out[[6, 11]] - 0.25) / 0.5, far(1.25), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(w=st.integers(1, 40), h=st.integers(1, 40), seed=st.integers(0, 2**32 - 1))
def test_resize_idempotent_in_dimensions(w, h, seed):
    img = RgbImage(np.random.default_rng(seed).random((17, 23, 3)))
    once = resize(img, w, h)
    twice = resize(once, w, h)
    assert once.size == twice.size == (w, h)
    assert np.max(np.abs(once.samples - twice.samples)) <= 1 / 510


def test_luma_weights():
    white = RgbImage(np.ones((2, 2, 3)))
    assert np.allclose(to_luma(white).samples, 1.0)
    green = RgbImage(np.tile([0.0, 1.0, 0.0], (2, 2, 1)))
    assert np.allclose(to_luma(green).samples, 0.587)


def test_from_luma_round_trip(photo):
    back = from_luma(to_luma(photo), photo)
    assert np.max(np.abs(back.samples - photo.samples)) <= 1 / 510


def test_from_luma_moves_only_luma(photo):
    plane = ImagePlane(np.clip(to_luma(photo).samples + 0.01, 0, 1))
    out = from_luma(plane, photo)
    chroma_in = photo.samples - to_luma(photo).samples[:, :, None]
    chroma_out = out.samples - to_luma(out).samples[:, :, None]
    interior = np.all((photo.samples > 0.02) & (photo.samples < 0.98), axis=2)
    np.testing.assert_allclose(chroma_in[interior], chroma_out[interior], atol=1e-12)


def test_dct_of_constant_block():
    c = block_dct(np.full((8, 8), 0.3))
    assert c.shape == (1, 1, 8, 8)
    assert c[0, 0, 0, 0] == pytest.approx(8 * 0.3)
    assert np.max(np.abs(c[0, 0].ravel()[1:])) < 1e-12


def test_dct_pads_by_edge_replication():
    arr = np.random.default_rng(1).random((13, 10))
    c = block_dct(arr)
    assert c.shape == (2, 2, 8, 8)
    back = block_idct(c, 13, 10)
    np.testing.assert_allclose(back, arr, atol=1e-12)
    full = block_idct(c)
    np.testing.assert_allclose(full[13:, :10], np.repeat(arr[-1:], 3, axis=0), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6).map(lambda k: 8 * k),
                                    st.integers(1, 6).map(lambda k: 8 * k)),
              elements=st.floats(-1, 1)))
def test_dct_inverse_and_parseval(plane):
    c = block_dct(plane)
    assert np.max(np.abs(block_idct(c) - plane)) < 1e-6
    assert abs(np.sum(plane**2) - np.sum(c**2)) < 1e-6
