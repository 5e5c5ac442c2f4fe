import numpy as np
import pytest

from medpatch.augment import AugmentationPlan, Sample, apply_intensity, apply_kspace, apply_spatial, compose
from medpatch.augment.plan import grouped
from medpatch.errors import ConfigError, ContractError, DimensionError


@pytest.fixture
def sample(rng):
    image = rng.standard_normal((1, 12, 12))
    mask = np.zeros((12, 12), dtype=np.int64)
    mask[3:7, 2:9] = 1
    mask[8:10, 8:11] = 2
    return Sample(image, mask)


def labels_of(mask: np.ndarray):
    return set(np.unique(mask).tolist())


class TestSample:
    def test_mask_extents_checked(self):
        with pytest.raises(DimensionError):
            Sample(np.zeros((1, 4, 4)), np.zeros((4, 5)))


class TestSpatial:
    def test_flip_twice_is_identity(self, sample, rng):
        once = apply_spatial(sample, "flip", {"axes": [0, 1]}, rng)
        assert not np.array_equal(once.image, sample.image)
        twice = apply_spatial(once, "flip", {"axes": [0, 1]}, rng)
        np.testing.assert_array_equal(twice.image, sample.image)
        np.testing.assert_array_equal(twice.mask, sample.mask)

    def test_flip_moves_mask_with_image(self, sample, rng):
        out = apply_spatial(sample, "flip", {"axes": [1]}, rng)
        np.testing.assert_array_equal(out.mask, sample.mask[:, ::-1])
        np.testing.assert_array_equal(out.image[0], sample.image[0][:, ::-1])

    def test_flip_axis_out_of_range(self, sample, rng):
        with pytest.raises(ConfigError):
            apply_spatial(sample, "flip", {"axes": [2]}, rng)

    def test_rotate_180_twice_is_identity(self, sample, rng):
        out = sample
        for _ in range(2):
            out = apply_spatial(out, "rotate", {"angle": 180}, rng)
        np.testing.assert_array_equal(out.image, sample.image)

    def test_rotate_90_needs_square_plane(self, rng):
        with pytest.raises(ConfigError):
            apply_spatial(Sample(np.zeros((1, 4, 6))), "rotate", {"angle": 90}, rng)

    def test_rotate_rejects_arbitrary_angles(self, sample, rng):
        with pytest.raises(ConfigError):
            apply_spatial(sample, "rotate", {"angle": 45}, rng)

    def test_affine_identity(self, sample, rng):
        out = apply_spatial(sample, "affine", {"degrees": 0.0, "scales": 1.0, "translation": 0.0}, rng)
        np.testing.assert_array_equal(out.image, sample.image)

    @pytest.mark.parametrize("kind,params", [
        ("affine", {"degrees": [-30, 30], "scales": [0.8, 1.2], "translation": 2.0}),
        ("elastic", {"control_points": 4, "max_displacement": 3.0}),
        ("anisotropy", {"axes": [0, 1], "downsampling": [2.0, 3.0]}),
    ])
    def test_extents_and_label_set_kept(self, sample, rng, kind, params):
        out = apply_spatial(sample, kind, params, rng)
        assert out.image.shape == sample.image.shape
        assert out.mask.shape == sample.mask.shape
        assert labels_of(out.mask) <= labels_of(sample.mask)

    def test_affine_3d(self, rng):
        sample = Sample(rng.standard_normal((2, 6, 7, 8)), np.ones((6, 7, 8), dtype=np.int64))
        out = apply_spatial(sample, "affine", {"degrees": 10.0}, rng)
        assert out.image.shape == (2, 6, 7, 8)

    def test_affine_border_fill_matches_mask(self):
        mask = np.zeros((10, 10), dtype=np.int64)
        mask[:4, :] = 1
        sample = Sample(mask[np.newaxis].astype(np.float64), mask)
        out = apply_spatial(sample, "affine", {"degrees": 0.0, "scales": 1.0, "translation": [3.0, 3.0]},
                            np.random.default_rng(0))
        assert out.mask[:3].all()
        np.testing.assert_allclose(out.image[0], out.mask, atol=1e-12)

    def test_elastic_border_fill_matches_mask(self, rng):
        mask = np.zeros((12, 12), dtype=np.int64)
        mask[:, :5] = 1
        sample = Sample(mask[np.newaxis].astype(np.float64), mask)
        out = apply_spatial(sample, "elastic", {"control_points": 3, "max_displacement": 4.0}, rng)
        # wherever the image is a pure label value, the mask carries the same one
        pure = np.isclose(out.image[0], 0.0) | np.isclose(out.image[0], 1.0)
        np.testing.assert_array_equal(np.round(out.image[0][pure]), out.mask[pure])

    def test_elastic_without_displacement(self, sample, rng):
        out = apply_spatial(sample, "elastic", {"max_displacement": 0.0}, rng)
        np.testing.assert_array_equal(out.image, sample.image)

    def test_anisotropy_leaves_mask(self, sample, rng):
        out = apply_spatial(sample, "anisotropy", {"axes": [0], "downsampling": 3.0}, rng)
        np.testing.assert_array_equal(out.mask, sample.mask)

    def test_group_mismatch(self, sample, rng):
        with pytest.raises(ConfigError, match="intensity"):
            apply_spatial(sample, "noise", {}, rng)


class TestIntensity:
    def test_blur_zero_sigma(self, sample, rng):
        np.testing.assert_array_equal(apply_intensity(sample, "blur", {"std": 0.0}, rng).image, sample.image)

    def test_blur_keeps_constant(self, rng):
        out = apply_intensity(Sample(np.full((1, 8, 8), 3.0)), "blur", {"std": 1.2}, rng)
        np.testing.assert_allclose(out.image, 3.0)

    def test_noise_statistics(self, rng):
        base = Sample(np.zeros((1, 64, 64)))
        out = apply_intensity(base, "noise", {"mean": 0.5, "std": 0.1}, rng)
        assert abs(out.image.mean() - 0.5) < 0.01
        assert abs(out.image.std() - 0.1) < 0.01

    def test_gamma(self, rng):
        ramp = np.linspace(0.0, 1.0, 11)[np.newaxis, np.newaxis].repeat(2, axis=1)
        out = apply_intensity(Sample(ramp), "gamma", {"gamma": 2.0}, rng)
        np.testing.assert_allclose(out.image, ramp ** 2, atol=1e-12)

    def test_intensity_never_touches_mask(self, sample, rng):
        for kind in ("blur", "noise", "gamma"):
            out = apply_intensity(sample, kind, {}, rng)
            np.testing.assert_array_equal(out.mask, sample.mask)

    def test_negative_sigma(self, sample, rng):
        with pytest.raises(ConfigError):
            apply_intensity(sample, "noise", {"std": -1.0}, rng)


class TestKSpace:
    def test_spike_at_origin_is_constant_offset(self, sample, rng):
        out = apply_kspace(Sample(sample.image), "spike", {"positions": [[0, 0]], "intensity": 0.3}, rng)
        np.testing.assert_allclose(out.image, sample.image + 0.3, atol=1e-10)

    def test_spike_is_a_grating(self, rng):
        base = Sample(np.zeros((1, 8, 8)))
        out = apply_kspace(base, "spike", {"positions": [[1, 0]], "intensity": 0.5}, rng)
        expected = 0.5 * np.cos(2 * np.pi * np.arange(8) / 8)[:, np.newaxis] * np.ones((1, 8))
        np.testing.assert_allclose(out.image[0], expected, atol=1e-10)

    def test_ghosting_keeps_mean(self, sample, rng):
        out = apply_kspace(Sample(sample.image), "ghosting", {"num_ghosts": 3, "intensity": 0.8}, rng)
        assert abs(out.image.mean() - sample.image.mean()) < 1e-10
        assert not np.allclose(out.image, sample.image)

    def test_ghosting_without_intensity(self, sample, rng):
        out = apply_kspace(Sample(sample.image), "ghosting", {"intensity": 0.0}, rng)
        np.testing.assert_array_equal(out.image, sample.image)

    def test_motion_keeps_mean(self, sample, rng):
        out = apply_kspace(Sample(sample.image), "motion", {"num_transforms": 2, "max_shift": 3.0}, rng)
        assert out.image.shape == sample.image.shape
        assert abs(out.image.mean() - sample.image.mean()) < 1e-10

    def test_motion_without_shift(self, sample, rng):
        out = apply_kspace(Sample(sample.image), "motion", {"max_shift": 0.0}, rng)
        np.testing.assert_array_equal(out.image, sample.image)

    def test_bias_field_without_coefficients(self, sample, rng):
        out = apply_kspace(Sample(sample.image), "bias_field", {"coefficients": 0.0}, rng)
        np.testing.assert_allclose(out.image, sample.image)

    def test_bias_field_is_positive_multiplier(self, rng):
        out = apply_kspace(Sample(np.ones((1, 6, 6))), "bias_field", {"order": 2, "coefficients": 0.5}, rng)
        assert np.all(out.image > 0)

    def test_multichannel_rejected(self, rng):
        with pytest.raises(ContractError):
            apply_kspace(Sample(np.zeros((2, 4, 4))), "spike", {}, rng)


class TestPlan:
    def test_from_config_keeps_order(self):
        res = AugmentationPlan.from_config({"noise": {"std": 0.1, "probability": 1.0}, "flip": None})
        assert res, res
        plan = res.unwrapped
        assert [e.kind for e in plan.entries] == ["noise", "flip"]
        assert plan.entries[0].probability == 1.0
        assert plan.entries[0].params == {"std": 0.1}
        assert plan.entries[1].probability == 0.35

    @pytest.mark.parametrize("mapping", [
        {"sharpen": {}},
        {"noise": {"probability": 1.5}},
        {"noise": {"std": [0.5, 0.1]}},
        {"flip": {"axis": 0}},
    ])
    def test_invalid_configuration(self, mapping):
        assert not AugmentationPlan.from_config(mapping)

    def test_probability_zero_never_applies(self, sample):
        plan = AugmentationPlan.from_config({"noise": {"probability": 0.0}}).unwrapped
        out = compose(plan, sample, np.random.default_rng(0))
        np.testing.assert_array_equal(out.image, sample.image)

    def test_same_seed_same_result(self, sample):
        plan = AugmentationPlan.from_config({
            "affine": {"probability": 1.0}, "noise": {"probability": 0.5}, "spike": {"probability": 1.0},
        }).unwrapped
        a = compose(plan, sample, np.random.default_rng(7))
        b = compose(plan, sample, np.random.default_rng(7))
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.mask, b.mask)

    def test_kspace_runs_per_channel(self, rng):
        plan = AugmentationPlan.from_config({"spike": {"probability": 1.0, "positions": [[0, 0]],
                                                       "intensity": 1.0}}).unwrapped
        image = rng.standard_normal((3, 6, 6))
        out = compose(plan, Sample(image), rng)
        np.testing.assert_allclose(out.image, image + 1.0, atol=1e-10)

    def test_unknown_group_is_a_configuration_error(self):
        with pytest.raises(ConfigError, match="geometric"):
            grouped("geometric")
