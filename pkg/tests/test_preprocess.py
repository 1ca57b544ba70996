import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from platescreen.errors import DegenerateSpreadError, EmptySelectionError
from platescreen.imagemodel import ImageStream
from platescreen.preprocess import (
    brightness_valid_frames,
    gaussian_smooth,
    normalize_affine,
    normalize_meanstd,
    normalize_minmax,
    normalize_saturating,
    requantize_8bit,
    select_frames,
    select_sharpest_plane,
    stimulus_exclusion_indices,
    to_gray,
    validity_mean_gate,
)
from platescreen.synthgen import SynthScript, render_sequence


def gray_stream(frames):
    return ImageStream.from_frames([np.asarray(f, dtype=np.uint8) for f in frames])


class TestSelectFrames:
    def test_stimulus_rule_keeps_count(self):
        kept = stimulus_exclusion_indices(1000)
        # 3 warm-up frames plus two 51-frame stimulus windows are dropped
        assert len(kept) == 1000 - 3 - 51 - 51
        assert 0 not in kept and 249 not in kept and 299 not in kept
        assert 248 in kept and 300 in kept

    def test_keep_all_is_identity(self):
        stream = gray_stream([np.full((3, 3), k) for k in range(5)])
        out = select_frames(stream, range(5))
        assert np.array_equal(out.data, stream.data)

    def test_single_frame_selection(self):
        stream = gray_stream([np.full((3, 3), k) for k in range(10)])
        out = select_frames(stream, {5})
        assert out.n_frames == 1
        assert out.frame(0)[0, 0] == 5

    def test_empty_selection_raises(self):
        stream = gray_stream([np.zeros((3, 3))])
        with pytest.raises(EmptySelectionError):
            select_frames(stream, [])

    def test_records_dropped_set(self):
        stream = gray_stream([np.zeros((3, 3))] * 4)
        out = select_frames(stream, [0, 2])
        assert out.meta["dropped_frames"] == [1, 3]

    def test_nested_selection_composes(self):
        stream = gray_stream([np.full((2, 2), k) for k in range(10)])
        outer = [0, 2, 4, 6, 8]
        once = select_frames(stream, outer)
        twice = select_frames(once, [1, 3])  # indices within the sub-stream
        direct = select_frames(stream, [outer[1], outer[3]])
        assert np.array_equal(twice.data, direct.data)


class TestToGray:
    def test_rgb_mean(self):
        frame = np.zeros((1, 1, 3), dtype=np.uint8)
        frame[0, 0] = (30, 60, 90)
        out = to_gray(ImageStream.from_frames([frame]))
        assert out.frame(0)[0, 0] == 60

    def test_gray_passthrough(self):
        stream = gray_stream([np.full((2, 2), 7)])
        assert to_gray(stream) is stream

    def test_all_white(self):
        frame = np.full((2, 2, 3), 255, dtype=np.uint8)
        out = to_gray(ImageStream.from_frames([frame]))
        assert (out.frame(0) == 255).all()


class TestNormalizeAffine:
    def test_mean_std_of_ramp_matches_oracle(self):
        img = np.arange(16, dtype=np.float64).reshape(4, 4)
        out = normalize_meanstd(img)
        mu = sum(range(16)) / 16.0
        sd = math.sqrt(sum((v - mu) ** 2 for v in range(16)) / 15.0)
        expected = (img - mu) / sd
        assert np.allclose(out, expected, atol=1e-12)

    def test_constant_image_raises(self):
        with pytest.raises(DegenerateSpreadError):
            normalize_meanstd(np.full((4, 4), 9.0))

    def test_minmax_endpoints(self):
        img = np.array([[0.0, 255.0], [0.0, 255.0]])
        out = normalize_minmax(img)
        assert set(np.unique(out)) == {0.0, 1.0}

    def test_zero_spread_raises(self):
        with pytest.raises(DegenerateSpreadError):
            normalize_affine(np.ones((2, 2)), 0.0, 0.0)

    def test_output_moments(self):
        rng = np.random.default_rng(5)
        img = rng.integers(0, 256, (12, 13)).astype(float)
        out = normalize_meanstd(img)
        assert abs(out.mean()) < 1e-9
        assert abs(out.std(ddof=1) - 1.0) < 1e-9


class TestNormalizeSaturating:
    def test_two_level_image(self):
        img = np.full((8, 8), 10.0)
        img.ravel()[:6] = 200.0  # ~10% bright pixels
        out = normalize_saturating(img, 2, 98)
        assert (out[img == 10] == 0.0).all()
        assert (out[img == 200] == 1.0).all()

    def test_vignette_saturates_both_tails(self):
        stream, _ = render_sequence(SynthScript(n_eggs=0, n_frames=1, seed=0))
        img = stream.frame(0).astype(float)
        out = normalize_saturating(img)
        n = img.size
        assert np.count_nonzero(out == 0.0) >= math.ceil(0.02 * n)
        assert np.count_nonzero(out == 1.0) >= math.floor(0.02 * n)

    def test_interior_ordering_kept(self):
        rng = np.random.default_rng(3)
        img = rng.permutation(np.arange(256)).reshape(16, 16).astype(float)
        out = normalize_saturating(img, 2, 98)
        inner = (out > 0) & (out < 1)
        pairs = np.argsort(img[inner])
        assert (np.diff(out[inner][pairs]) >= 0).all()

    def test_near_constant_raises(self):
        with pytest.raises(DegenerateSpreadError):
            normalize_saturating(np.full((5, 5), 3.0))

    def test_requantize(self):
        assert requantize_8bit(np.array([[0.0, 1.0]])).tolist() == [[0, 255]]

    @settings(max_examples=25, deadline=None)
    @given(
        img=hnp.arrays(np.uint8, (6, 6)),
        bump=st.integers(0, 40),
    )
    def test_monotone_pixelwise(self, img, bump):
        a = img.astype(float)
        b = np.clip(a + bump, 0, 255)
        try:
            out_a = normalize_saturating(a)
            out_b = normalize_saturating(b)
        except DegenerateSpreadError:
            return
        # same image shifted brighter keeps per-pixel ordering of outputs
        order = np.argsort(a.ravel())
        ra = out_a.ravel()[order]
        rb = out_b.ravel()[order]
        assert ((np.diff(ra) >= 0) | ~np.isfinite(np.diff(ra))).all()
        assert ((np.diff(rb) >= 0) | ~np.isfinite(np.diff(rb))).all()


class TestValidityGate:
    def test_bright_empty_well_fails(self):
        assert validity_mean_gate(np.full((4, 4), 240.0), 0, 200) is False

    def test_synthetic_well_with_egg_passes(self):
        stream, _ = render_sequence(
            SynthScript(n_eggs=1, n_frames=1, width=80, height=80,
                        radius_range=(24, 24), seed=1)
        )
        img = stream.frame(0).astype(float)
        assert 50 < img.mean() < 235
        assert validity_mean_gate(img, 50, 235) is True

    def test_full_range_always_passes(self):
        assert validity_mean_gate(np.full((2, 2), 255.0), 0, 255) is True

    def test_brightness_frame_mask(self):
        frames = [np.full((4, 4), 100)] * 10 + [np.full((4, 4), 140)]
        mask = brightness_valid_frames(gray_stream(frames), factor=1.25)
        assert mask[:10].all() and not mask[10]


class TestGaussianSmooth:
    def test_constant_invariant(self):
        img = np.full((5, 5), 42.0)
        assert np.allclose(gaussian_smooth(img, 0.5), img, atol=1e-12)

    def test_single_pixel_kernel_weights(self):
        img = np.zeros((5, 5))
        img[2, 2] = 1.0
        out = gaussian_smooth(img, 0.5)
        e2 = math.exp(-2.0)
        e4 = math.exp(-4.0)
        norm = 1.0 + 4 * e2 + 4 * e4
        assert out[2, 2] == pytest.approx(1.0 / norm, abs=1e-12)
        assert out[2, 1] == pytest.approx(e2 / norm, abs=1e-12)
        assert out[1, 1] == pytest.approx(e4 / norm, abs=1e-12)

    def test_symmetric_input_symmetric_output(self):
        rng = np.random.default_rng(2)
        half = rng.uniform(0, 255, (6, 3))
        img = np.hstack([half, half[:, ::-1]])
        out = gaussian_smooth(img, 0.5)
        assert np.allclose(out, out[:, ::-1], atol=1e-12)


class TestSharpestPlane:
    def test_single_plane(self):
        assert select_sharpest_plane([np.zeros((4, 4))]) == 0

    def test_blurred_copies_rank_below_original(self):
        rng = np.random.default_rng(11)
        sharp = rng.integers(0, 256, (24, 24)).astype(float)
        blurred = gaussian_smooth(gaussian_smooth(sharp, 1.0), 1.0)
        assert select_sharpest_plane([blurred, sharp, blurred]) == 1

    def test_tie_goes_to_lowest_index(self):
        img = np.random.default_rng(0).uniform(0, 255, (8, 8))
        assert select_sharpest_plane([img, img.copy(), img.copy()]) == 0
