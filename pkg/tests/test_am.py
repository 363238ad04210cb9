import numpy as np
import pytest

from causalmaps import (
    AmConfig,
    DegenerateTargetError,
    NonFiniteGradientError,
    ShapeMismatchError,
    am_run,
    combined_prior_loss,
    frequency_loss,
    histogram_loss,
    noise_loss,
    quadratic_scorer,
    symmetry_loss,
)
from causalmaps.am import box_blur

from helpers import finite_difference_grad, nudge_off_histogram_kinks, relative_error


def rand_image(rng, h=8, w=8, c=1):
    return rng.random((h, w, c))


class TestAmRun:
    def test_quadratic_convergence(self):
        rng = np.random.default_rng(0)
        target = np.full((6, 6, 1), 0.5)
        init = rand_image(rng, 6, 6)
        cfg = AmConfig(step_size=0.1, iterations=500, clip_lo=-1.0, clip_hi=2.0, seed=0)
        final = am_run(quadratic_scorer(target), init, cfg)
        assert np.max(np.abs(final - target)) <= 1e-3

    def test_activation_trace_non_decreasing(self):
        rng = np.random.default_rng(1)
        target = np.full((6, 6, 1), 0.5)
        cfg = AmConfig(step_size=0.05, iterations=200, clip_lo=-1.0, clip_hi=2.0)
        trace = []
        am_run(quadratic_scorer(target), rand_image(rng, 6, 6), cfg,
               on_iteration=lambda t, a, r: trace.append(a))
        diffs = np.diff(np.array(trace)[10:])
        assert np.all(diffs >= -1e-12)

    def test_zero_iterations_identity(self):
        rng = np.random.default_rng(2)
        init = rand_image(rng)
        cfg = AmConfig(iterations=0)
        out = am_run(quadratic_scorer(np.zeros_like(init)), init, cfg)
        assert np.array_equal(out, init)

    def test_deterministic_with_jitter_and_clipping(self):
        rng = np.random.default_rng(3)
        target = rand_image(rng)
        init = rand_image(rng)
        cfg = AmConfig(step_size=0.2, iterations=60, jitter_px=2, blur_every=7, seed=42)
        scorer = quadratic_scorer(target)
        a = am_run(scorer, init, cfg)
        b = am_run(scorer, init, cfg)
        assert np.array_equal(a, b)

    def test_pixels_stay_in_clip_range(self):
        rng = np.random.default_rng(4)
        target = 3.0 * np.ones((6, 6, 1))  # pulls pixels out of range
        cfg = AmConfig(step_size=0.3, iterations=50, clip_lo=0.0, clip_hi=1.0, seed=7)
        out = am_run(quadratic_scorer(target), rand_image(rng, 6, 6), cfg)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_non_finite_gradient_aborts_with_iteration(self):
        def bad_scorer(img):
            return 1.0, np.full_like(img, np.nan)

        cfg = AmConfig(iterations=10)
        with pytest.raises(NonFiniteGradientError) as err:
            am_run(bad_scorer, np.zeros((4, 4, 1)), cfg)
        assert err.value.iteration == 0

    def test_scorer_shape_mismatch_rejected(self):
        def bad_scorer(img):
            return 0.0, np.zeros((2, 2, 1))

        with pytest.raises(ShapeMismatchError):
            am_run(bad_scorer, np.zeros((4, 4, 1)), AmConfig(iterations=1))

    def test_regularizer_gradients_are_subtracted(self):
        # with a zero scorer the image just descends the regularizer
        def zero_scorer(img):
            return 0.0, np.zeros_like(img)

        rng = np.random.default_rng(5)
        init = rand_image(rng)
        cfg = AmConfig(step_size=1.0, iterations=300, clip_lo=-1.0, clip_hi=2.0)
        out = am_run(zero_scorer, init, cfg, regularizers=[lambda im: symmetry_loss(im)])
        assert symmetry_loss(out)[0] < symmetry_loss(init)[0] * 1e-3

    def test_box_blur_matches_manual_mean(self):
        rng = np.random.default_rng(6)
        img = rand_image(rng, 5, 5)
        padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
        manual = np.zeros_like(img)
        for i in range(3):
            for j in range(3):
                manual += padded[i : i + 5, j : j + 5]
        assert np.allclose(box_blur(img), manual / 9.0, atol=1e-12)

    def test_bad_config_rejected(self):
        with pytest.raises(ValueError):
            AmConfig(step_size=0.0)
        with pytest.raises(ValueError):
            AmConfig(clip_lo=1.0, clip_hi=0.0)
        with pytest.raises(ValueError):
            AmConfig(prior_weights=(1.0, -1.0, 0.0, 0.0))


class TestSymmetryLoss:
    def test_mirror_symmetric_image_is_zero(self):
        rng = np.random.default_rng(7)
        half = rng.random((6, 3, 1))
        img = np.concatenate([half, half[:, ::-1, :]], axis=1)
        value, grad = symmetry_loss(img)
        assert value == 0.0
        assert np.array_equal(grad, np.zeros_like(img))

    def test_unit_gap(self):
        img = np.concatenate([np.ones((4, 2, 1)), np.zeros((4, 2, 1))], axis=1)
        assert symmetry_loss(img)[0] == 1.0

    def test_odd_width_center_column_ignored(self):
        rng = np.random.default_rng(8)
        half = rng.random((4, 2, 1))
        center = rng.random((4, 1, 1))
        img = np.concatenate([half, center, half[:, ::-1, :]], axis=1)
        value, grad = symmetry_loss(img)
        assert value == 0.0
        assert np.array_equal(grad[:, 2, :], np.zeros((4, 1)))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            img = rand_image(rng)
            _, grad = symmetry_loss(img)
            fd = finite_difference_grad(lambda im: symmetry_loss(im)[0], img)
            assert relative_error(grad, fd) <= 1e-4


class TestHistogramLoss:
    def test_zero_when_hist_matches_target(self):
        rng = np.random.default_rng(10)
        img = rand_image(rng)
        # build the target from the image's own soft histogram
        probe = np.full(16, 1.0 / 16)
        _, _ = histogram_loss(img, probe)
        eps = 1e-8
        counts = np.zeros(16)
        x = img.ravel()
        pos = x / (1.0 / 16) - 0.5
        i0 = np.floor(pos).astype(int)
        frac = pos - i0
        inside = (i0 >= 0) & (i0 <= 14)
        np.add.at(counts, i0[inside], 1 - frac[inside])
        np.add.at(counts, i0[inside] + 1, frac[inside])
        counts[0] += (i0 < 0).sum()
        counts[15] += (i0 > 14).sum()
        target = counts / counts.sum()
        value, _ = histogram_loss(img, target)
        assert value < 1e-12

    def test_non_negative(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            img = rand_image(rng, 6, 6)
            raw = rng.random(8)
            target = raw / raw.sum()
            assert histogram_loss(img, target)[0] >= 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            img = nudge_off_histogram_kinks(rand_image(rng), 16)
            raw = rng.random(16) + 0.1
            target = raw / raw.sum()
            _, grad = histogram_loss(img, target)
            fd = finite_difference_grad(lambda im: histogram_loss(im, target)[0], img)
            assert relative_error(grad, fd) <= 1e-3

    def test_negative_target_rejected(self):
        with pytest.raises(DegenerateTargetError):
            histogram_loss(np.zeros((4, 4, 1)), np.array([1.5, -0.5]))

    def test_unnormalized_target_rejected(self):
        with pytest.raises(DegenerateTargetError):
            histogram_loss(np.zeros((4, 4, 1)), np.array([0.5, 0.4]))


class TestNoiseLoss:
    def test_zero_image(self):
        value, grad = noise_loss(np.zeros((6, 6, 1)))
        assert value == 0.0
        assert np.array_equal(grad, np.zeros((6, 6, 1)))

    def test_constant_image_matches_pooling_oracle(self):
        c = 0.3
        img = np.full((8, 8, 1), c)
        # oracle: direct zero-padded 5x5 window averages
        x = img[:, :, 0]
        padded = np.pad(x, 2)
        mu = np.zeros_like(x)
        mu2 = np.zeros_like(x)
        for i in range(5):
            for j in range(5):
                mu += padded[i : i + 8, j : j + 8]
                mu2 += padded[i : i + 8, j : j + 8] ** 2
        mu /= 25.0
        mu2 /= 25.0
        expected = np.mean((mu - (mu2 - mu**2)) ** 2)
        value, _ = noise_loss(img)
        assert value == pytest.approx(expected, abs=1e-15)
        # interior windows see no padding: mean c, variance 0, contribution c^2
        assert (mu - (mu2 - mu**2))[4, 4] == pytest.approx(c, abs=1e-15)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            img = rand_image(rng)
            _, grad = noise_loss(img)
            fd = finite_difference_grad(lambda im: noise_loss(im)[0], img)
            assert relative_error(grad, fd) <= 1e-4

    def test_multichannel_rejected(self):
        with pytest.raises(ShapeMismatchError):
            noise_loss(np.zeros((4, 4, 3)))

    def test_unsupported_pooling_rejected(self):
        with pytest.raises(ValueError):
            noise_loss(np.zeros((4, 4, 1)), kernel=5, stride=2, padding=2)


class TestFrequencyLoss:
    def test_identity(self):
        rng = np.random.default_rng(14)
        img = rand_image(rng)
        assert frequency_loss(img, img)[0] == 0.0

    def test_circular_shift_invariance(self):
        rng = np.random.default_rng(15)
        img = rand_image(rng)
        shifted = np.roll(img, (3, 5), axis=(0, 1))
        assert frequency_loss(shifted, img)[0] <= 1e-12

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(16)
        for _ in range(20):
            img = rand_image(rng)
            ref = rand_image(rng)
            _, grad = frequency_loss(img, ref)
            fd = finite_difference_grad(lambda im: frequency_loss(im, ref)[0], img)
            assert relative_error(grad, fd) <= 1e-4

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            frequency_loss(np.zeros((4, 4, 1)), np.zeros((5, 5, 1)))


class TestCombinedPriorLoss:
    def test_all_weights_zero(self):
        img = np.random.default_rng(17).random((6, 6, 1))
        value, grad = combined_prior_loss(img, AmConfig())
        assert value == 0.0
        assert np.array_equal(grad, np.zeros_like(img))

    def test_symmetry_only_on_mirror_image(self):
        half = np.random.default_rng(18).random((6, 3, 1))
        img = np.concatenate([half, half[:, ::-1, :]], axis=1)
        cfg = AmConfig(prior_weights=(0.0, 0.0, 1.0, 0.0))
        assert combined_prior_loss(img, cfg)[0] == 0.0

    def test_linear_in_each_weight(self):
        rng = np.random.default_rng(19)
        img = rand_image(rng)
        ref = rand_image(rng)
        raw = rng.random(16) + 0.1
        target = raw / raw.sum()
        for slot in range(4):
            values = []
            for w in (1.0, 2.0):
                weights = [0.0, 0.0, 0.0, 0.0]
                weights[slot] = w
                cfg = AmConfig(prior_weights=tuple(weights))
                values.append(combined_prior_loss(img, cfg, target, ref)[0])
            assert values[1] == pytest.approx(2.0 * values[0], rel=1e-12)

    def test_gradient_is_weighted_sum(self):
        rng = np.random.default_rng(20)
        img = rand_image(rng)
        ref = rand_image(rng)
        raw = rng.random(16) + 0.1
        target = raw / raw.sum()
        cfg = AmConfig(prior_weights=(0.3, 0.9, 1.7, 0.2))
        _, grad = combined_prior_loss(img, cfg, target, ref)
        expected = (
            0.3 * histogram_loss(img, target, value_range=(cfg.clip_lo, cfg.clip_hi))[1]
            + 0.9 * noise_loss(img)[1]
            + 1.7 * symmetry_loss(img)[1]
            + 0.2 * frequency_loss(img, ref)[1]
        )
        assert np.allclose(grad, expected, atol=1e-15)
