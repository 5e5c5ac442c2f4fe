from pathlib import Path

import numpy as np
import pytest

from medpatch.errors import DimensionError, FormatError, ParseError, ValidationError
from medpatch.imaging import Image, ImageGeometry, read_image, read_manifest, write_image
from medpatch.imaging.manifest import parse_manifest
from medpatch.imaging.mha import decode_mha, encode_mha

from conftest import write_manifest


def mha_bytes(header_lines, payload: bytes) -> bytes:
    return ("\n".join(header_lines) + "\n").encode("ascii") + payload


class TestImage:
    def test_from_array_adds_channel_axis(self):
        image = Image.from_array(np.zeros((3, 4)), spacing=(0.5, 2.0))
        assert image.values.shape == (1, 3, 4)
        assert image.extents == (3, 4)
        assert image.spacing == (0.5, 2.0)
        assert image.origin == (0.0, 0.0)

    def test_geometry_must_match_axes(self):
        with pytest.raises(DimensionError):
            Image(np.zeros((1, 3, 4)), ImageGeometry((1.0,), (0.0,)))

    def test_non_positive_spacing(self):
        with pytest.raises(Exception, match="spacing"):
            ImageGeometry((1.0, 0.0), (0.0, 0.0))


class TestMetaImage:
    def test_round_trip_3d_multichannel(self, rng):
        values = rng.standard_normal((2, 3, 4, 5))
        image = Image(values, ImageGeometry((3.0, 2.0, 0.5), (-1.0, 2.5, 10.0)))
        decoded = decode_mha(encode_mha(image))
        np.testing.assert_array_equal(decoded.values, values)
        assert decoded.spacing == image.spacing
        assert decoded.origin == image.origin

    @pytest.mark.parametrize("dtype", [np.uint8, np.int16, np.uint16, np.int32, np.float32, np.float64])
    def test_pixel_types(self, dtype):
        values = (np.arange(24).reshape(1, 4, 6) % 100).astype(dtype)
        decoded = decode_mha(encode_mha(Image(values)))
        assert decoded.values.dtype == dtype
        np.testing.assert_array_equal(decoded.values, values)

    def test_header_axes_are_x_first(self):
        header = ["ObjectType = Image", "NDims = 2", "DimSize = 3 2", "ElementSpacing = 0.5 2.0",
                  "Offset = 1 7", "ElementType = MET_UCHAR", "ElementDataFile = LOCAL"]
        image = decode_mha(mha_bytes(header, bytes(range(6))))
        assert image.extents == (2, 3)
        assert image.spacing == (2.0, 0.5)
        assert image.origin == (7.0, 1.0)
        np.testing.assert_array_equal(image.values[0], [[0, 1, 2], [3, 4, 5]])

    def test_big_endian_payload(self):
        header = ["NDims = 1", "DimSize = 2", "ElementType = MET_SHORT", "BinaryDataByteOrderMSB = True",
                  "ElementDataFile = LOCAL"]
        image = decode_mha(mha_bytes(header, b"\x01\x00\xff\xfe"))
        assert image.values[0].tolist() == [256, -2]

    def test_payload_length_mismatch_reports_offset(self):
        header = ["NDims = 2", "DimSize = 2 2", "ElementType = MET_UCHAR", "ElementDataFile = LOCAL"]
        data = mha_bytes(header, bytes(3))
        with pytest.raises(ParseError) as info:
            decode_mha(data)
        assert info.value.offset == len(data) - 3

    def test_missing_required_field(self):
        with pytest.raises(ParseError, match="DimSize"):
            decode_mha(mha_bytes(["NDims = 2", "ElementType = MET_UCHAR", "ElementDataFile = LOCAL"], b""))

    def test_dim_size_count_mismatch(self):
        header = ["NDims = 3", "DimSize = 2 2", "ElementType = MET_UCHAR", "ElementDataFile = LOCAL"]
        with pytest.raises(ParseError, match="NDims is 3"):
            decode_mha(mha_bytes(header, bytes(4)))

    @pytest.mark.parametrize("line", ["CompressedData = True", "ElementDataFile = image.raw"])
    def test_unsupported_features(self, line):
        header = ["NDims = 1", "DimSize = 2", "ElementType = MET_UCHAR", line]
        if not line.startswith("ElementDataFile"):
            header.append("ElementDataFile = LOCAL")
        with pytest.raises(FormatError):
            decode_mha(mha_bytes(header, bytes(2)))

    def test_unknown_element_type(self):
        header = ["NDims = 1", "DimSize = 2", "ElementType = MET_HALF", "ElementDataFile = LOCAL"]
        with pytest.raises(FormatError, match="MET_HALF"):
            decode_mha(mha_bytes(header, bytes(4)))


class TestRasterFiles:
    @pytest.mark.parametrize("suffix,channels", [(".pgm", 1), (".ppm", 3), (".png", 1), (".png", 3)])
    def test_round_trip(self, tmp_path, rng, suffix, channels):
        values = rng.integers(0, 256, size=(channels, 5, 7)).astype(np.uint8)
        path = tmp_path / f"image{suffix}"
        assert write_image(Image(values), path)
        res = read_image(path)
        assert res, res
        np.testing.assert_array_equal(res.unwrapped.values, values)
        assert res.unwrapped.spacing == (1.0, 1.0)

    def test_pgm_needs_one_channel(self, tmp_path):
        res = write_image(Image(np.zeros((3, 4, 4), dtype=np.uint8)), tmp_path / "x.pgm")
        assert not res
        assert res.error.kind == "FormatError"

    def test_fractional_values_rejected(self, tmp_path):
        assert not write_image(Image.from_array(np.full((4, 4), 0.5)), tmp_path / "x.png")

    def test_unsupported_extension(self, tmp_path):
        path = tmp_path / "x.nii"
        path.write_bytes(b"")
        res = read_image(path)
        assert not res
        assert res.error.kind == "FormatError"

    def test_garbage_raster(self, tmp_path):
        path = tmp_path / "x.ppm"
        path.write_bytes(b"P6\nnot an image")
        res = read_image(path)
        assert not res
        assert res.error.kind == "ParseError"

    def test_mha_file_round_trip(self, tmp_path):
        image = Image.from_array(np.arange(12.0).reshape(3, 4), spacing=(0.7, 0.9), origin=(1.0, 2.0))
        path = write_image(image, tmp_path / "nested" / "x.mha").unwrapped
        loaded = read_image(path).unwrapped
        np.testing.assert_array_equal(loaded.values, image.values)
        assert loaded.geometry == image.geometry


class TestManifest:
    def _touch(self, directory: Path, *names):
        for name in names:
            (directory / name).write_bytes(b"")

    def test_segmentation_rows(self, tmp_path):
        self._touch(tmp_path, "a0.mha", "a1.mha", "am.mha")
        path = write_manifest(tmp_path / "m.csv", [("a", "a0.mha", "a1.mha", "am.mha")], channels=2)
        res = read_manifest(path, "segmentation")
        assert res, res
        (record,) = res.unwrapped
        assert record.subject_id == "a"
        assert record.channel_paths == (tmp_path / "a0.mha", tmp_path / "a1.mha")
        assert record.mask_path == tmp_path / "am.mha"
        assert record.value is None

    def test_regression_label_is_a_number(self, tmp_path):
        text = "SubjectID,Channel_0,Label\na,x.mha,2.5\n"
        (record,) = parse_manifest(text, "regression", tmp_path)
        assert record.value == 2.5

    def test_non_numeric_regression_label(self, tmp_path):
        with pytest.raises(ParseError) as info:
            parse_manifest("SubjectID,Channel_0,Label\na,x.mha,2.5\nb,y.mha,big\n", "regression", tmp_path)
        assert info.value.line == 3

    def test_channel_count_mismatch(self, tmp_path):
        text = "SubjectID,Channel_0,Channel_1,Label\na,x.mha,,m.mha\n"
        with pytest.raises(ParseError, match="1 channel"):
            parse_manifest(text, "segmentation", tmp_path)

    def test_channel_columns_must_be_contiguous(self, tmp_path):
        with pytest.raises(ParseError):
            parse_manifest("SubjectID,Channel_0,Channel_2,Label\n", "segmentation", tmp_path)

    def test_missing_label_column(self, tmp_path):
        with pytest.raises(ParseError, match="Label"):
            parse_manifest("SubjectID,Channel_0\na,x.mha\n", "segmentation", tmp_path)
        (record,) = parse_manifest("SubjectID,Channel_0\na,x.mha\n", "segmentation", tmp_path, require_label=False)
        assert not record.has_target

    def test_duplicate_ids(self, tmp_path):
        with pytest.raises(ValidationError) as info:
            parse_manifest("SubjectID,Channel_0,Label\na,x,1\nb,y,2\na,z,3\n", "regression", tmp_path)
        assert info.value.items == ["a"]

    def test_every_missing_file_is_reported(self, tmp_path):
        self._touch(tmp_path, "a.mha")
        path = write_manifest(tmp_path / "m.csv", [("a", "a.mha", "am.mha"), ("b", "b.mha", "bm.mha")])
        res = read_manifest(path, "segmentation")
        assert not res
        message = str(res.error)
        for name in ("am.mha", "b.mha", "bm.mha"):
            assert name in message

    def test_empty_manifest(self, tmp_path):
        with pytest.raises(ParseError):
            parse_manifest("", "segmentation", tmp_path)
