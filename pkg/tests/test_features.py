import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vqstudy.features import (
    brightness,
    colorfulness,
    contrast,
    frame_features,
    list_frame_files,
    load_frame,
    sharpness,
    video_features,
    video_features_from_dir,
)

from oracles import (
    brightness_oracle,
    colorfulness_oracle,
    contrast_oracle,
    sharpness_oracle,
)


def solid(r, g, b, h=8, w=8):
    frame = np.zeros((h, w, 3))
    frame[..., 0], frame[..., 1], frame[..., 2] = r, g, b
    return frame


def random_frame(seed, h=16, w=16):
    return np.random.default_rng(seed).uniform(0.0, 1.0, (h, w, 3))


class TestBrightness:
    def test_white_is_one(self):
        assert brightness(solid(1, 1, 1)) == 1.0

    def test_black_is_zero(self):
        assert brightness(solid(0, 0, 0)) == 0.0

    def test_half_red_half_black(self):
        frame = solid(0, 0, 0, h=8, w=8)
        frame[:4, :, 0] = 1.0  # pure red rows: V = max(R,G,B) = 1
        assert brightness(frame) == pytest.approx(0.5, abs=1e-12)


class TestContrast:
    def test_constant_frame(self):
        assert contrast(solid(0.3, 0.3, 0.3)) == 0.0

    def test_half_black_half_white(self):
        frame = solid(0, 0, 0)
        frame[:4, :, :] = 1.0
        assert contrast(frame) == pytest.approx(0.5, abs=1e-12)

    def test_two_by_two_bernoulli(self):
        frame = np.zeros((2, 2, 3))
        frame[0, :, :] = 0.0
        frame[1, :, :] = 1.0  # luma {0, 0, 1, 1}
        assert contrast(frame) == pytest.approx(0.5, abs=1e-12)


class TestColorfulness:
    @given(st.floats(min_value=0.0, max_value=1.0, allow_nan=False))
    @settings(max_examples=25, deadline=None)
    def test_any_gray_frame_is_zero(self, v):
        assert colorfulness(solid(v, v, v)) == 0.0

    def test_constant_pure_red(self):
        # rg = 1, yb = 0.5, sigmas = 0 -> 0.3 * sqrt(1.25)
        assert colorfulness(solid(1, 0, 0)) == pytest.approx(
            0.3 * math.sqrt(1.25), abs=1e-9
        )

    def test_matches_per_pixel_oracle(self):
        frame = random_frame(0)
        assert colorfulness(frame) == pytest.approx(
            colorfulness_oracle(frame.tolist()), abs=1e-9
        )


class TestSharpness:
    def test_constant_frame_is_zero(self):
        assert sharpness(solid(0.42, 0.42, 0.42)) == 0.0

    def test_vertical_step_edge_closed_form(self):
        h, w = 10, 12
        frame = np.zeros((h, w, 3))
        frame[:, w // 2 :, :] = 1.0
        # interior magnitude is 4 on the two columns beside the edge
        w_valid = w - 2
        expected = math.log(1.0 + 4.0 * (2.0 / w_valid))
        assert sharpness(frame) == pytest.approx(expected, abs=1e-9)

    def test_matches_naive_convolution_oracle(self):
        frame = random_frame(1)
        assert sharpness(frame) == pytest.approx(
            sharpness_oracle(frame.tolist()), abs=1e-9
        )

    def test_frame_smaller_than_kernel_rejected(self):
        with pytest.raises(ValueError):
            sharpness(np.zeros((2, 8, 3)))


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(5))
    def test_all_features_on_random_frames(self, seed):
        frame = random_frame(seed, h=24, w=17)
        listed = frame.tolist()
        assert brightness(frame) == pytest.approx(brightness_oracle(listed), abs=1e-9)
        assert contrast(frame) == pytest.approx(contrast_oracle(listed), abs=1e-9)
        assert colorfulness(frame) == pytest.approx(
            colorfulness_oracle(listed), abs=1e-9
        )
        assert sharpness(frame) == pytest.approx(sharpness_oracle(listed), abs=1e-9)


class TestInvariances:
    def test_pointwise_features_permutation_invariant_sharpness_not(self):
        frame = random_frame(2, h=12, w=12)
        rng = np.random.default_rng(3)
        flat = frame.reshape(-1, 3)
        shuffled = flat[rng.permutation(len(flat))].reshape(frame.shape)
        assert brightness(shuffled) == pytest.approx(brightness(frame), abs=1e-12)
        assert contrast(shuffled) == pytest.approx(contrast(frame), abs=1e-12)
        assert colorfulness(shuffled) == pytest.approx(colorfulness(frame), abs=1e-12)
        assert sharpness(shuffled) != pytest.approx(sharpness(frame), abs=1e-6)

    def test_horizontal_mirror_invariance(self):
        frame = random_frame(4, h=11, w=14)
        mirrored = frame[:, ::-1, :]
        for fn in (brightness, contrast, colorfulness, sharpness):
            assert fn(mirrored) == pytest.approx(fn(frame), abs=1e-9)

    @pytest.mark.parametrize("a", [0.25, 0.5, 1.0])
    def test_linear_scaling_of_contrast_and_colorfulness(self, a):
        frame = random_frame(5)
        assert contrast(a * frame) == pytest.approx(a * contrast(frame), abs=1e-9)
        assert colorfulness(a * frame) == pytest.approx(
            a * colorfulness(frame), abs=1e-9
        )

    def test_pixel_scale_matches_scaled_stats(self):
        frame = random_frame(6)
        assert contrast(frame, pixel_scale=255.0) == pytest.approx(
            255.0 * contrast(frame), abs=1e-9
        )
        # sharpness scales inside the log
        from vqstudy.features import luma
        from vqstudy.kernels import sobel_mean_grad_mag

        expected = math.log1p(255.0 * sobel_mean_grad_mag(luma(frame)))
        assert sharpness(frame, pixel_scale=255.0) == pytest.approx(expected, abs=1e-12)


class TestFrameValidation:
    def test_wrong_shape_rejected(self):
        with pytest.raises(ValueError):
            brightness(np.zeros((4, 4)))

    def test_out_of_gamut_rejected(self):
        with pytest.raises(ValueError):
            brightness(solid(1.5, 0, 0))

    def test_non_finite_rejected(self):
        frame = solid(0.5, 0.5, 0.5)
        frame[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            brightness(frame)


class TestVideoFeatures:
    def test_identical_frames_equal_single_frame(self):
        frame = random_frame(7)
        single = frame_features(frame)
        video = video_features([frame] * 4)
        for field in ("brightness", "contrast", "colorfulness", "sharpness"):
            assert getattr(video, field) == pytest.approx(
                getattr(single, field), abs=1e-12
            )

    def test_brightness_midpoint(self):
        dark = solid(0.2, 0.2, 0.2)
        bright = solid(0.8, 0.8, 0.8)
        video = video_features([dark, bright])
        assert video.brightness == pytest.approx(0.5, abs=1e-12)

    def test_stride_on_pair_duplicated_video(self):
        frames = []
        for seed in range(3):
            f = random_frame(seed + 10)
            frames += [f, f]  # each frame duplicated back-to-back
        full = video_features(frames, stride=1)
        sampled = video_features(frames, stride=2)
        for field in ("brightness", "contrast", "colorfulness", "sharpness"):
            assert getattr(sampled, field) == pytest.approx(
                getattr(full, field), abs=1e-12
            )

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            video_features([])
        with pytest.raises(ValueError):
            video_features([random_frame(0)], stride=0)


class TestFrameIo:
    def test_png_and_ppm_round_trip(self, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(8)
        pixels = rng.integers(0, 256, (9, 7, 3), dtype=np.uint8)
        Image.fromarray(pixels, "RGB").save(tmp_path / "f0001.png")
        Image.fromarray(pixels, "RGB").save(tmp_path / "f0002.ppm")
        png = load_frame(str(tmp_path / "f0001.png"))
        ppm = load_frame(str(tmp_path / "f0002.ppm"))
        assert np.array_equal(png, ppm)
        assert np.array_equal(png, pixels.astype(np.float64) / 255.0)

    def test_directory_features(self, tmp_path):
        from PIL import Image

        rng = np.random.default_rng(9)
        for i in range(4):
            pixels = rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)
            Image.fromarray(pixels, "RGB").save(tmp_path / f"frame_{i:04d}.png")
        (tmp_path / "notes.txt").write_text("ignored")
        feats, n = video_features_from_dir(str(tmp_path), stride=2)
        assert n == 2
        assert len(list_frame_files(str(tmp_path))) == 4
        assert feats.brightness > 0

    def test_empty_directory_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            video_features_from_dir(str(tmp_path))
