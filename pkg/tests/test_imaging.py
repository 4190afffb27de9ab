"""Imaging primitives against independent dense/brute-force oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from efface.imaging import (
    gaussian_blur,
    gaussian_kernel,
    load_alpha,
    load_image,
    load_mask,
    morphology,
    resample,
    save_alpha,
    save_image,
    save_mask,
)

rng = np.random.default_rng(99)


def dense_gaussian_conv(img, sigma):
    """Oracle: direct 2-D convolution with an explicit kernel, clamped edges."""
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-0.5 * (x / sigma) ** 2)
    k1 /= k1.sum()
    k2 = np.outer(k1, k1)
    h, w = img.shape
    out = np.zeros_like(img)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for di in range(-radius, radius + 1):
                for dj in range(-radius, radius + 1):
                    ii = min(max(i + di, 0), h - 1)
                    jj = min(max(j + dj, 0), w - 1)
                    acc += k2[di + radius, dj + radius] * img[ii, jj]
            out[i, j] = acc
    return out


class TestGaussianBlur:
    def test_constant_preserved_exactly(self):
        img = np.full((9, 11), 0.37)
        assert np.array_equal(gaussian_blur(img, 2.5), img)

    def test_sigma_zero_is_identity(self):
        img = rng.random((8, 8))
        assert gaussian_blur(img, 0.0) is img or np.array_equal(gaussian_blur(img, 0.0), img)

    def test_impulse_matches_dense_oracle(self):
        img = np.zeros((15, 15))
        img[7, 7] = 1.0
        got = gaussian_blur(img, 1.0)
        want = dense_gaussian_conv(img, 1.0)
        np.testing.assert_allclose(got, want, atol=1e-12)
        assert abs(got.sum() - 1.0) < 1e-6

    def test_random_image_matches_dense_oracle(self):
        img = rng.random((10, 12))
        np.testing.assert_allclose(
            gaussian_blur(img, 0.7), dense_gaussian_conv(img, 0.7), atol=1e-12
        )

    def test_kernel_radius_rule(self):
        assert gaussian_kernel(1.0).shape == (7,)   # ceil(3)
        assert gaussian_kernel(0.7).shape == (7,)   # ceil(2.1) = 3
        assert gaussian_kernel(0.5).shape == (5,)   # ceil(1.5) = 2

    def test_three_channel(self):
        img = rng.random((6, 6, 3))
        out = gaussian_blur(img, 1.0)
        for c in range(3):
            np.testing.assert_allclose(
                out[:, :, c], dense_gaussian_conv(img[:, :, c], 1.0), atol=1e-12
            )

    def test_range_preserved(self):
        img = rng.random((16, 16))
        out = gaussian_blur(img, 3.0)
        assert out.min() >= 0.0 and out.max() <= 1.0

    @pytest.mark.parametrize("sigma", [float("nan"), float("inf"), -1.0])
    def test_bad_sigma(self, sigma):
        with pytest.raises(ValueError):
            gaussian_blur(np.zeros((4, 4)), sigma)


def brute_force_morph(mask, radius, mode):
    """Oracle: explicit pixel scan over the square window."""
    h, w = mask.shape
    out = np.zeros_like(mask)
    for i in range(h):
        for j in range(w):
            window = mask[
                max(0, i - radius) : min(h, i + radius + 1),
                max(0, j - radius) : min(w, j + radius + 1),
            ]
            out[i, j] = window.max() if mode == "dilate" else window.min()
    return out


class TestMorphology:
    def test_single_pixel_dilate(self):
        mask = np.zeros((7, 7))
        mask[3, 3] = 1.0
        want = np.zeros((7, 7))
        want[2:5, 2:5] = 1.0
        assert np.array_equal(morphology(mask, 1, "dilate"), want)

    def test_block_erode(self):
        mask = np.zeros((7, 7))
        mask[2:5, 2:5] = 1.0
        want = np.zeros((7, 7))
        want[3, 3] = 1.0
        assert np.array_equal(morphology(mask, 1, "erode"), want)

    def test_radius_zero_identity(self):
        mask = (rng.random((9, 9)) > 0.5).astype(np.float64)
        assert np.array_equal(morphology(mask, 0, "dilate"), mask)

    @pytest.mark.parametrize("mode", ["dilate", "erode"])
    @pytest.mark.parametrize("radius", [1, 2])
    def test_matches_brute_force(self, mode, radius):
        for trial in range(5):
            mask = (np.random.default_rng(trial).random((16, 16)) > 0.6).astype(float)
            got = morphology(mask, radius, mode)
            assert np.array_equal(got, brute_force_morph(mask, radius, mode))

    def test_closing_is_superset(self):
        for trial in range(20):
            mask = (np.random.default_rng(trial).random((16, 16)) > 0.7).astype(float)
            closed = morphology(morphology(mask, 1, "dilate"), 1, "erode")
            assert np.all(closed >= mask)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**63 - 1), st.integers(1, 2), st.booleans())
    def test_monotone(self, seed, radius, dilate):
        r = np.random.default_rng(seed)
        small = (r.random((12, 12)) > 0.7).astype(float)
        big = np.maximum(small, (r.random((12, 12)) > 0.7).astype(float))
        mode = "dilate" if dilate else "erode"
        assert np.all(morphology(small, radius, mode) <= morphology(big, radius, mode))

    def test_non_binary_rejected(self):
        with pytest.raises(ValueError):
            morphology(np.full((4, 4), 0.5), 1, "dilate")

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            morphology(np.zeros((4, 4)), 1, "open")


class TestResample:
    def test_same_size_identity(self):
        img = rng.random((8, 10))
        for mode in ("bilinear", "area"):
            assert np.array_equal(resample(img, 8, 10, mode), img)

    def test_constant_preserved(self):
        img = np.full((6, 6, 3), 0.42)
        for mode in ("bilinear", "area"):
            assert np.array_equal(resample(img, 13, 5, mode), np.full((13, 5, 3), 0.42))

    def test_area_two_by_two(self):
        mask = np.array([[1.0, 1.0], [0.0, 0.0]])
        assert resample(mask, 1, 1, "area")[0, 0] == 0.5

    @pytest.mark.parametrize("k", [2, 3, 4])
    def test_area_block_mean_exact(self, k):
        mask = (rng.random((8 * k, 8 * k)) > 0.5).astype(np.float64)
        got = resample(mask, 8, 8, "area")
        for i in range(8):
            for j in range(8):
                block = mask[i * k : (i + 1) * k, j * k : (j + 1) * k]
                assert got[i, j] == np.mean(block)

    def test_bilinear_upsample_range(self):
        img = rng.random((4, 4))
        out = resample(img, 37, 19, "bilinear")
        assert out.min() >= img.min() and out.max() <= img.max()

    def test_zero_target_rejected(self):
        with pytest.raises(ValueError):
            resample(np.zeros((4, 4)), 0, 4, "bilinear")

    def test_alpha_range_survives(self):
        # negative-valued layers must scale without being clipped to [0, 1]
        alpha = rng.uniform(-1.0, 1.0, size=(8, 8, 3))
        out = resample(alpha, 12, 12, "bilinear")
        assert out.min() < -0.1
        assert out.min() >= alpha.min() and out.max() <= alpha.max()


class TestPngIO:
    def test_image_round_trip(self, tmp_path):
        img = np.round(rng.random((9, 7, 3)) * 255) / 255.0
        save_image(img, tmp_path / "img.png")
        np.testing.assert_allclose(load_image(tmp_path / "img.png"), img, atol=1e-12)

    def test_binary_mask_round_trip(self, tmp_path):
        mask = (rng.random((9, 7)) > 0.5).astype(np.float64)
        save_mask(mask, tmp_path / "m.png")
        assert np.array_equal(load_mask(tmp_path / "m.png", binary=True), mask)

    def test_mask_threshold_at_128(self, tmp_path):
        save_mask(np.array([[127 / 255.0, 128 / 255.0]]), tmp_path / "m.png")
        assert np.array_equal(
            load_mask(tmp_path / "m.png", binary=True), np.array([[0.0, 1.0]])
        )

    def test_alpha_round_trip_16bit(self, tmp_path):
        alpha = rng.uniform(-1.0, 1.0, size=(6, 5, 3))
        save_alpha(alpha, tmp_path / "a.png")
        back = load_alpha(tmp_path / "a.png")
        np.testing.assert_allclose(back, alpha, atol=1.0 / 65535.0)
