import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from garmentwarp import (ShapeError, ValidationError, inception_score,
                         masked_ssim, ssim, ssim_map)
from garmentwarp.metrics import to_luma


class TestSsim:
    def test_self_similarity_is_one(self, rng):
        img = rng.random((16, 16))
        value, smap = ssim(img, img)
        np.testing.assert_allclose(value, 1.0, atol=1e-9)
        np.testing.assert_allclose(smap.data, np.ones((6, 6)), atol=1e-9)

    def test_symmetry(self, rng):
        a = rng.random((14, 18))
        b = rng.random((14, 18))
        np.testing.assert_allclose(ssim(a, b)[0], ssim(b, a)[0], atol=1e-9)

    def test_constant_images_closed_form(self):
        a = np.full((16, 16), 0.5)
        b = np.full((16, 16), 0.6)
        want = (2 * 0.5 * 0.6 + 0.01) / (0.25 + 0.36 + 0.01)
        np.testing.assert_allclose(ssim(a, b)[0], want, atol=1e-5)
        np.testing.assert_allclose(want, 0.983871, atol=5e-7)

    def test_map_range(self, rng):
        for _ in range(10):
            a = rng.random((12, 12))
            b = rng.random((12, 12))
            smap = ssim_map(a, b).data
            assert smap.min() >= -1.0 - 1e-12 and smap.max() <= 1.0 + 1e-12

    def test_window_size_guard(self, rng):
        with pytest.raises(ValidationError):
            ssim(rng.random((10, 10)), rng.random((10, 10)))

    def test_value_range_guard(self):
        with pytest.raises(ValidationError):
            ssim(np.full((12, 12), 1.5), np.full((12, 12), 0.5))

    def test_color_inputs_luma_converted(self, rng):
        img = rng.random((16, 16, 3))
        luma = to_luma(img)
        np.testing.assert_allclose(ssim(img, img * 0.9 + 0.05)[0],
                                   ssim(luma, to_luma(img * 0.9 + 0.05))[0],
                                   atol=1e-12)

    def test_luma_weights(self):
        img = np.zeros((1, 1, 3))
        img[0, 0] = [1.0, 1.0, 1.0]
        np.testing.assert_allclose(to_luma(img), [[1.0]], atol=1e-12)
        img[0, 0] = [1.0, 0.0, 0.0]
        np.testing.assert_allclose(to_luma(img), [[0.299]])


class TestMaskedSsim:
    def test_full_mask_equals_mean(self, rng):
        a = rng.random((16, 16))
        b = rng.random((16, 16))
        np.testing.assert_allclose(masked_ssim(a, b, np.ones((16, 16))),
                                   ssim(a, b)[0], atol=1e-12)

    def test_single_pixel_mask(self, rng):
        a = rng.random((16, 16))
        b = rng.random((16, 16))
        mask = np.zeros((16, 16))
        mask[8, 9] = 1.0
        got = masked_ssim(a, b, mask)
        np.testing.assert_allclose(got, ssim_map(a, b).data[3, 4], atol=1e-12)

    def test_half_mask_submask_average(self, rng):
        a = rng.random((16, 16))
        b = rng.random((16, 16))
        mask = np.zeros((16, 16))
        mask[:8] = 1.0
        smap = ssim_map(a, b).data
        want = smap[:3].mean()   # rows 5..7 of the image interior
        np.testing.assert_allclose(masked_ssim(a, b, mask), want, atol=1e-12)

    def test_empty_mask_rejected(self, rng):
        with pytest.raises(ValidationError):
            masked_ssim(rng.random((16, 16)), rng.random((16, 16)),
                        np.zeros((16, 16)))

    def test_mask_outside_interior_rejected(self, rng):
        mask = np.zeros((16, 16))
        mask[0, 0] = 1.0   # no valid window covers the corner
        with pytest.raises(ValidationError):
            masked_ssim(rng.random((16, 16)), rng.random((16, 16)), mask)

    def test_binary_mask_enforced(self, rng):
        with pytest.raises(ValidationError):
            masked_ssim(rng.random((16, 16)), rng.random((16, 16)),
                        np.full((16, 16), 0.5))


class TestInceptionScore:
    def test_uniform_rows(self):
        assert inception_score(np.full((5, 4), 0.25)) == 1.0

    def test_balanced_one_hots(self):
        np.testing.assert_allclose(inception_score(np.eye(6)), 6.0, atol=1e-9)

    def test_hand_kl_value(self):
        got = inception_score(np.array([[0.8, 0.2], [0.2, 0.8]]))
        want = np.exp(0.8 * np.log(0.8 / 0.5) + 0.2 * np.log(0.2 / 0.5))
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_zero_entries_use_zero_convention(self):
        probs = np.array([[1.0, 0.0], [0.5, 0.5]])
        marginal = np.array([0.75, 0.25])
        kl1 = 1.0 * np.log(1.0 / 0.75)
        kl2 = 0.5 * np.log(0.5 / 0.75) + 0.5 * np.log(0.5 / 0.25)
        np.testing.assert_allclose(inception_score(probs),
                                   np.exp(0.5 * (kl1 + kl2)), rtol=1e-12)

    def test_row_sum_validated(self):
        with pytest.raises(ValidationError):
            inception_score(np.array([[0.5, 0.4]]))

    def test_nonnegative_validated(self):
        with pytest.raises(ValidationError):
            inception_score(np.array([[1.5, -0.5]]))

    def test_rank_validated(self):
        with pytest.raises(ShapeError):
            inception_score(np.ones(4))

    @settings(deadline=None, max_examples=50)
    @given(st.integers(1, 8), st.integers(2, 6), st.integers(0, 2 ** 31 - 1))
    def test_range_bounds(self, n, k, seed):
        raw = np.random.default_rng(seed).random((n, k)) + 1e-3
        probs = raw / raw.sum(axis=1, keepdims=True)
        score = inception_score(probs)
        assert 1.0 - 1e-9 <= score <= k + 1e-9
