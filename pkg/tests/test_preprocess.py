import numpy as np
import pytest

from medpatch.data import labels_to_indices, load_subject
from medpatch.errors import ConfigError, DegenerateInputError, DimensionError, ValidationError
from medpatch.imaging import Image, read_manifest
from medpatch.preprocess import (CropRecord, IntensityRange, ResampleRecord, apply_pipeline, clip, crop_zero_planes,
                                 parse_steps, rescale, resample, threshold, uncrop, undo_grid_change, zscore)

from conftest import square_subject, write_manifest


def line(*values) -> Image:
    return Image.from_array(np.array(values, dtype=np.float64))


class TestIntensity:
    def test_threshold_zeroes_outside(self):
        out = threshold(line(-5, 0, 3, 9), IntensityRange(0, 5))
        assert out.values[0].tolist() == [0, 0, 3, 0]

    def test_clip_saturates(self):
        out = clip(line(-1000, -500, 0), IntensityRange(-900, -300))
        assert out.values[0].tolist() == [-900, -500, -300]

    def test_inverted_range(self):
        with pytest.raises(ConfigError):
            IntensityRange(5, 0)

    def test_input_not_modified(self):
        image = line(-5, 0, 3, 9)
        threshold(image, IntensityRange(0, 5))
        assert image.values[0].tolist() == [-5, 0, 3, 9]

    def test_rescale(self):
        out = rescale(line(2, 4, 6), -1.0, 1.0)
        np.testing.assert_allclose(out.values[0], [-1.0, 0.0, 1.0])

    def test_rescale_constant(self):
        with pytest.raises(DegenerateInputError):
            rescale(line(3, 3, 3))

    def test_zscore_full(self):
        out = zscore(line(1, 2, 3))
        np.testing.assert_allclose(out.values[0], [-1.2247449, 0.0, 1.2247449], atol=1e-6)

    def test_zscore_per_channel(self, rng):
        values = np.stack([5 + 3 * rng.standard_normal((6, 6)), -2 + 0.1 * rng.standard_normal((6, 6))])
        out = zscore(Image(values)).values
        np.testing.assert_allclose(out.mean(axis=(1, 2)), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=(1, 2)), 1.0, atol=1e-12)

    def test_zscore_nonzero_keeps_background(self):
        out = zscore(line(0, 1, 2, 3, 0), mode="nonzero").values[0]
        np.testing.assert_allclose(out, [0.0, -1.2247449, 0.0, 1.2247449, 0.0], atol=1e-6)

    def test_zscore_explicit_mask(self):
        out = zscore(line(10, 1, 2, 3), mode="explicit", mask=np.array([0, 1, 1, 1])).values[0]
        np.testing.assert_allclose(out, [0.0, -1.2247449, 0.0, 1.2247449], atol=1e-6)

    def test_zscore_constant(self):
        with pytest.raises(DegenerateInputError):
            zscore(line(4, 4, 4))

    def test_zscore_mask_extents(self):
        with pytest.raises(DimensionError):
            zscore(line(1, 2, 3), mode="explicit", mask=np.ones(4))


class TestResample:
    def test_constant_stays_constant(self):
        image = Image.from_array(np.full((8, 6), 7.0), spacing=(1.0, 1.5))
        out = resample(image, spacing=(0.7, 2.0))
        np.testing.assert_allclose(out.values, 7.0)

    def test_spacing_target_sets_extents(self):
        image = Image.from_array(np.zeros((8, 10)), spacing=(1.0, 1.0))
        out = resample(image, spacing=(2.0, 0.5))
        assert out.extents == (4, 20)
        assert out.spacing == (2.0, 0.5)

    def test_physical_extent_kept(self):
        image = Image.from_array(np.zeros((9, 7, 5)), spacing=(1.0, 2.0, 3.0))
        out = resample(image, spacing=(1.4, 1.4, 1.4))
        for n, s, m, t in zip(image.extents, image.spacing, out.extents, out.spacing):
            assert abs(n * s - m * t) <= t

    def test_extents_target_sets_spacing(self):
        image = Image.from_array(np.zeros((8, 8)), spacing=(1.0, 2.0))
        out = resample(image, extents=(4, 16))
        assert out.spacing == (2.0, 1.0)

    def test_nearest_keeps_label_values(self, rng):
        labels = rng.integers(0, 3, size=(9, 9)).astype(np.uint8)
        out = resample(Image.from_array(labels), spacing=(0.6, 1.7), interp="nearest")
        assert set(np.unique(out.values)) <= {0, 1, 2}
        assert out.values.dtype == np.uint8

    def test_exactly_one_target(self):
        image = Image.from_array(np.zeros((4, 4)))
        with pytest.raises(ConfigError):
            resample(image)
        with pytest.raises(ConfigError):
            resample(image, spacing=(1, 1), extents=(4, 4))

    def test_wrong_axis_count(self):
        with pytest.raises(DimensionError):
            resample(Image.from_array(np.zeros((4, 4))), spacing=(1.0,))


class TestCrop:
    def test_crop_and_uncrop(self):
        values = np.zeros((6, 7))
        values[2:4, 1:5] = np.arange(1, 9).reshape(2, 4)
        image = Image.from_array(values, spacing=(0.5, 2.0), origin=(1.0, -1.0))
        cropped, (companion,), record = crop_zero_planes(image, [Image.from_array(values > 0)])
        assert cropped.extents == (2, 4)
        assert companion.extents == (2, 4)
        assert cropped.origin == (2.0, 1.0)
        restored = uncrop(cropped, record)
        np.testing.assert_array_equal(restored.values, image.values)
        assert restored.origin == image.origin

    def test_all_zero(self):
        with pytest.raises(DegenerateInputError):
            crop_zero_planes(Image.from_array(np.zeros((3, 3))))


class TestPipeline:
    def test_steps_from_configuration(self):
        res = parse_steps([{"clip": {"min": 0, "max": 2}}, "rescale"])
        assert res, res
        image, _, records = apply_pipeline(res.unwrapped, line(-1, 1, 5))
        np.testing.assert_allclose(image.values[0], [0.0, 0.5, 1.0])
        assert records == []

    def test_unknown_step(self):
        res = parse_steps(["histogram_match"])
        assert not res
        assert "histogram_match" in str(res.error)

    def test_bad_parameter(self):
        assert not parse_steps([{"clip": {"low": 0}}])

    def test_malformed_entry(self):
        assert not parse_steps([{"clip": {}, "rescale": {}}])

    def test_resample_step_keeps_mask_labels(self):
        steps = parse_steps([{"resample": {"spacing": [2.0, 2.0]}}]).unwrapped
        mask = Image.from_array(np.eye(8, dtype=np.uint8))
        image, mask, _ = apply_pipeline(steps, Image.from_array(np.ones((8, 8))), mask)
        assert image.extents == mask.extents == (4, 4)
        assert set(np.unique(mask.values)) <= {0, 1}

    def test_records_in_application_order(self):
        values = np.zeros((8, 8))
        values[2:6, 2:6] = 1.0
        image = Image.from_array(values)
        steps = parse_steps(["crop_zero_planes", {"resample": {"spacing": [2.0, 2.0]}}]).unwrapped
        out, _, records = apply_pipeline(steps, image)
        assert [type(r) for r in records] == [CropRecord, ResampleRecord]
        assert records[1].original_extents == (4, 4)
        assert out.extents == (2, 2)
        restored = undo_grid_change(undo_grid_change(out, records[1]), records[0])
        assert restored.extents == (8, 8)
        assert restored.geometry == image.geometry

    def test_resample_to_same_grid_records_nothing(self):
        steps = parse_steps([{"resample": {"spacing": [1.0, 1.0]}}]).unwrapped
        _, _, records = apply_pipeline(steps, Image.from_array(np.ones((4, 4))))
        assert records == []


class TestSubjectLoading:
    def test_labels_to_indices(self):
        out = labels_to_indices(np.array([0, 4, 2, 4]), [0, 2, 4])
        assert out.tolist() == [0, 2, 1, 2]

    def test_unknown_label_values(self):
        with pytest.raises(ValidationError) as info:
            labels_to_indices(np.array([0, 3, 5]), [0, 3])
        assert info.value.items == [5]

    def test_load_segmentation_subject(self, tmp_path):
        image_path, mask_path = square_subject(tmp_path, "a", extents=(12, 12))
        manifest = write_manifest(tmp_path / "m.csv", [("a", str(image_path), str(mask_path))])
        (record,) = read_manifest(manifest, "segmentation").unwrapped
        steps = parse_steps(["zscore"]).unwrapped
        res = load_subject(record, steps, "segmentation", [0, 1])
        assert res, res
        subject = res.unwrapped
        assert subject.image.shape == (1, 12, 12)
        assert subject.mask.sum() == 36
        assert subject.original_extents == (12, 12)
        assert abs(subject.image.mean()) < 1e-9

    def test_mismatched_mask_extents(self, tmp_path):
        image_path, _ = square_subject(tmp_path, "a", extents=(12, 12))
        _, mask_path = square_subject(tmp_path, "b", extents=(10, 12))
        manifest = write_manifest(tmp_path / "m.csv", [("a", str(image_path), str(mask_path))])
        (record,) = read_manifest(manifest, "segmentation").unwrapped
        res = load_subject(record, [], "segmentation", [0, 1])
        assert not res
        assert res.error.kind == "DimensionError"

    def test_classification_target_is_class_index(self, tmp_path):
        image_path, _ = square_subject(tmp_path, "a")
        manifest = write_manifest(tmp_path / "m.csv", [("a", str(image_path), "7")])
        (record,) = read_manifest(manifest, "classification").unwrapped
        subject = load_subject(record, [], "classification", [3, 7]).unwrapped
        assert subject.target == 1.0
        assert subject.mask is None
