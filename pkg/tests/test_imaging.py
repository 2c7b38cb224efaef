import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image

from diffcap.errors import InvalidInputError
from diffcap.imaging import (ImagePair, align_pair, compute_diff_mask,
                             load_image, whole_image_l2)


def random_image(rng, h=24, w=24):
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def translate_with_border_fill(img, dy, dx):
    """img2 such that img2[r + dy, c + dx] == img[r, c]; borders copy img."""
    out = img.copy()
    h, w = img.shape[:2]
    for r in range(h):
        for c in range(w):
            rr, cc = r + dy, c + dx
            if 0 <= rr < h and 0 <= cc < w:
                out[rr, cc] = img[r, c]
    return out


def oracle_best_shift(img1, img2, max_shift):
    """Exhaustive search re-implemented from the definition: mean per-pixel
    Euclidean color distance over the overlap, ties by |dy|+|dx|, dy, dx."""
    h, w = img1.shape[:2]
    best = None
    for dy in range(-max_shift, max_shift + 1):
        for dx in range(-max_shift, max_shift + 1):
            r0, r1 = max(0, -dy), h + min(0, -dy)
            c0, c1 = max(0, -dx), w + min(0, -dx)
            total, count = 0.0, 0
            for r in range(r0, r1):
                for c in range(c0, c1):
                    d = img1[r, c].astype(float) - img2[r + dy, c + dx].astype(float)
                    total += math.sqrt(float((d * d).sum()))
                    count += 1
            key = (total / count, abs(dy) + abs(dx), dy, dx)
            if best is None or key < best:
                best = key
    return best[2], best[3]


class TestAlignPair:
    def test_identical_images_zero_shift(self):
        img = random_image(np.random.default_rng(0))
        assert align_pair(img, img, 5) == (0, 0)

    def test_recovers_synthetic_translation(self):
        rng = np.random.default_rng(1)
        img1 = random_image(rng, 20, 20)
        img2 = translate_with_border_fill(img1, 2, 1)
        got = align_pair(img1, img2, 5)
        assert got == (2, 1)
        assert got == oracle_best_shift(img1, img2, 5)

    def test_noise_pair_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(2)
        img1 = random_image(rng, 14, 14)
        img2 = random_image(rng, 14, 14)
        assert align_pair(img1, img2, 3) == oracle_best_shift(img1, img2, 3)

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(3)
        with pytest.raises(InvalidInputError):
            align_pair(random_image(rng, 10, 10), random_image(rng, 12, 10), 2)

    def test_bad_max_shift_rejected(self):
        img = random_image(np.random.default_rng(4), 10, 10)
        with pytest.raises(InvalidInputError):
            align_pair(img, img, -1)
        with pytest.raises(InvalidInputError):
            align_pair(img, img, 5)  # >= min(h, w)/2

    @given(st.integers(0, 2 ** 32 - 1), st.integers(0, 4))
    @settings(max_examples=20, deadline=None)
    def test_self_alignment_is_zero(self, seed, max_shift):
        img = random_image(np.random.default_rng(seed), 12, 12)
        assert align_pair(img, img, max_shift) == (0, 0)

    def test_antisymmetric_for_unique_minimizer(self):
        rng = np.random.default_rng(5)
        img1 = random_image(rng, 20, 20)
        img2 = translate_with_border_fill(img1, -1, 3)
        dy, dx = align_pair(img1, img2, 4)
        assert align_pair(img2, img1, 4) == (-dy, -dx)


def oracle_diff_mask(img1, img2, delta):
    h, w = img1.shape[:2]
    bits = np.zeros((h, w), dtype=np.uint8)
    for r in range(h):
        for c in range(w):
            d = img1[r, c].astype(np.float64) - img2[r, c].astype(np.float64)
            bits[r, c] = 1 if math.sqrt(float((d * d).sum())) > delta else 0
    return bits


class TestComputeDiffMask:
    def test_identical_images_all_zero(self):
        img = random_image(np.random.default_rng(0))
        mask = compute_diff_mask(ImagePair(img1=img, img2=img), delta=30.0)
        assert mask.bits.sum() == 0

    def test_single_changed_pixel(self):
        img1 = np.zeros((8, 8, 3), dtype=np.uint8)
        img2 = img1.copy()
        img2[3, 5] = (255, 0, 0)
        mask = compute_diff_mask(ImagePair(img1=img1, img2=img2), delta=30.0)
        assert mask.bits[3, 5] == 1
        assert mask.bits.sum() == 1

    def test_matches_per_pixel_oracle(self):
        rng = np.random.default_rng(6)
        img1, img2 = random_image(rng, 32, 32), random_image(rng, 32, 32)
        mask = compute_diff_mask(ImagePair(img1=img1, img2=img2), delta=40.0)
        assert np.array_equal(mask.bits, oracle_diff_mask(img1, img2, 40.0))

    def test_nonpositive_delta_rejected(self):
        img = random_image(np.random.default_rng(7))
        with pytest.raises(InvalidInputError):
            compute_diff_mask(ImagePair(img1=img, img2=img), delta=0.0)

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=15, deadline=None)
    def test_monotone_in_delta(self, seed):
        rng = np.random.default_rng(seed)
        img1, img2 = random_image(rng, 12, 12), random_image(rng, 12, 12)
        pair = ImagePair(img1=img1, img2=img2)
        low = compute_diff_mask(pair, delta=20.0).bits
        high = compute_diff_mask(pair, delta=60.0).bits
        assert np.all(high <= low)

    def test_invariant_under_shared_pixel_permutation(self):
        rng = np.random.default_rng(8)
        img1, img2 = random_image(rng, 10, 10), random_image(rng, 10, 10)
        base = compute_diff_mask(ImagePair(img1=img1, img2=img2), delta=40.0).bits
        perm = rng.permutation(100)
        shuffle = lambda im: im.reshape(100, 3)[perm].reshape(10, 10, 3)
        permuted = compute_diff_mask(
            ImagePair(img1=shuffle(img1), img2=shuffle(img2)), delta=40.0).bits
        assert np.array_equal(permuted, base.reshape(-1)[perm].reshape(10, 10))

    def test_shifted_pair_masks_overlap_only(self):
        rng = np.random.default_rng(9)
        img1 = random_image(rng, 16, 16)
        img2 = translate_with_border_fill(img1, 2, 0)
        pair = ImagePair(img1=img1, img2=img2, shift=(2, 0))
        mask = compute_diff_mask(pair, delta=1.0)
        assert mask.bits.shape == (16, 16)
        assert mask.bits[14:, :].sum() == 0  # outside the overlap, zero padded


class TestLoadImage:
    def test_png_roundtrip_and_grayscale_promotion(self, tmp_path):
        arr = np.arange(48, dtype=np.uint8).reshape(4, 4, 3)
        Image.fromarray(arr).save(tmp_path / "rgb.png")
        assert np.array_equal(load_image(tmp_path / "rgb.png"), arr)

        gray = np.arange(16, dtype=np.uint8).reshape(4, 4)
        Image.fromarray(gray, mode="L").save(tmp_path / "gray.png")
        loaded = load_image(tmp_path / "gray.png")
        assert loaded.shape == (4, 4, 3)
        assert np.array_equal(loaded[..., 0], gray)
        assert np.array_equal(loaded[..., 1], gray)

    def test_alpha_dropped(self, tmp_path):
        rgba = np.zeros((4, 4, 4), dtype=np.uint8)
        rgba[..., 0] = 200
        rgba[..., 3] = 17
        Image.fromarray(rgba, mode="RGBA").save(tmp_path / "a.png")
        loaded = load_image(tmp_path / "a.png")
        assert loaded.shape == (4, 4, 3)
        assert np.all(loaded[..., 0] == 200)

    def test_jpeg_readable(self, tmp_path):
        arr = np.full((8, 8, 3), 90, dtype=np.uint8)
        Image.fromarray(arr).save(tmp_path / "img.jpg", quality=95)
        loaded = load_image(tmp_path / "img.jpg")
        assert loaded.shape == (8, 8, 3)


def test_whole_image_l2_matches_definition():
    rng = np.random.default_rng(10)
    a, b = random_image(rng, 6, 6), random_image(rng, 6, 6)
    expected = math.sqrt(((a.astype(float) - b.astype(float)) ** 2).sum())
    assert whole_image_l2(a, b) == pytest.approx(expected, abs=1e-9)
