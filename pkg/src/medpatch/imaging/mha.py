"""
MetaImage (.mha) codec: a `Key = Value` text header followed by the raw
voxel buffer in the same file (ElementDataFile = LOCAL).

The buffer is x-fastest with channels interleaved per voxel, so a
(Z, Y, X, C) C-ordered numpy array; it is exposed as (C, Z, Y, X).
DimSize, ElementSpacing and Offset are listed x first and are reversed
into numpy axis order.
"""

import logging
from typing import Dict, List, Tuple

import numpy as np

from medpatch.errors import FormatError, ParseError
from medpatch.imaging.image import Image, ImageGeometry

logger = logging.getLogger(__name__)

MET_TYPES: Dict[str, np.dtype] = {
    "MET_UCHAR": np.dtype(np.uint8),
    "MET_CHAR": np.dtype(np.int8),
    "MET_USHORT": np.dtype(np.uint16),
    "MET_SHORT": np.dtype(np.int16),
    "MET_UINT": np.dtype(np.uint32),
    "MET_INT": np.dtype(np.int32),
    "MET_ULONG_LONG": np.dtype(np.uint64),
    "MET_LONG_LONG": np.dtype(np.int64),
    "MET_FLOAT": np.dtype(np.float32),
    "MET_DOUBLE": np.dtype(np.float64),
}
_TYPE_NAMES = {dtype: name for name, dtype in MET_TYPES.items()}

_REQUIRED = ("NDims", "DimSize", "ElementType", "ElementDataFile")
_TRUE = ("true", "1")


def _numbers(key: str, value: str, cast, count: int, offset: int) -> List:
    try:
        items = [cast(v) for v in value.split()]
    except ValueError as e:
        raise ParseError(f"{key} has a non-numeric entry in '{value}'", offset=offset) from e
    if len(items) != count:
        raise ParseError(f"{key} lists {len(items)} values, NDims is {count}", offset=offset)
    return items


def parse_header(data: bytes) -> Tuple[Dict[str, str], Dict[str, int], int]:
    """
    Split the header from the payload.

    Returns:
        (fields, byte offset of each field's line, byte offset of the payload)
    """
    fields: Dict[str, str] = {}
    offsets: Dict[str, int] = {}
    pos = 0
    while True:
        end = data.find(b"\n", pos)
        if end < 0:
            raise ParseError("header ended without an ElementDataFile line", offset=pos)
        raw = data[pos:end]
        line_offset = pos
        pos = end + 1
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError as e:
            raise ParseError("non-ASCII bytes in header", offset=line_offset) from e
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"header line '{line[:40]}' is not of the form Key = Value", offset=line_offset)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError("header line with an empty key", offset=line_offset)
        fields[key] = value
        offsets[key] = line_offset
        if key == "ElementDataFile":
            return fields, offsets, pos


def decode_mha(data: bytes) -> Image:
    fields, offsets, payload_offset = parse_header(data)
    missing = [key for key in _REQUIRED if key not in fields]
    if missing:
        raise ParseError(f"header is missing {', '.join(missing)}", offset=0)

    if fields["ElementDataFile"] != "LOCAL":
        raise FormatError(f"external data file '{fields['ElementDataFile']}' is not supported, only LOCAL")
    if fields.get("CompressedData", "False").lower() in _TRUE:
        raise FormatError("compressed MetaImage payloads are not supported")

    try:
        ndims = int(fields["NDims"])
    except ValueError as e:
        raise ParseError(f"NDims '{fields['NDims']}' is not an integer", offset=offsets["NDims"]) from e
    if ndims < 1:
        raise ParseError(f"NDims must be >= 1, got {ndims}", offset=offsets["NDims"])

    dim_size = _numbers("DimSize", fields["DimSize"], int, ndims, offsets["DimSize"])
    spacing_key = "ElementSpacing" if "ElementSpacing" in fields else "ElementSize"
    spacing = (_numbers(spacing_key, fields[spacing_key], float, ndims, offsets[spacing_key])
               if spacing_key in fields else [1.0] * ndims)
    origin_key = next((k for k in ("Offset", "Origin", "Position") if k in fields), None)
    origin = _numbers(origin_key, fields[origin_key], float, ndims, offsets[origin_key]) if origin_key else [0.0] * ndims

    element_type = fields["ElementType"]
    if element_type not in MET_TYPES:
        raise FormatError(f"ElementType {element_type} is not supported, expected one of {sorted(MET_TYPES)}")
    dtype = MET_TYPES[element_type]
    msb = fields.get("BinaryDataByteOrderMSB", fields.get("ElementByteOrderMSB", "False")).lower() in _TRUE
    dtype = dtype.newbyteorder(">" if msb else "<")

    try:
        channels = int(fields.get("ElementNumberOfChannels", "1"))
    except ValueError as e:
        raise ParseError("ElementNumberOfChannels is not an integer", offset=offsets["ElementNumberOfChannels"]) from e

    count = channels * int(np.prod(dim_size))
    expected = count * dtype.itemsize
    available = len(data) - payload_offset
    if available != expected:
        raise ParseError(f"payload holds {available} bytes, header describes {expected}", offset=payload_offset)

    flat = np.frombuffer(data, dtype=dtype, count=count, offset=payload_offset)
    values = flat.reshape(tuple(reversed(dim_size)) + (channels,))
    values = np.moveaxis(values, -1, 0).astype(dtype.newbyteorder("="), copy=True)
    geometry = ImageGeometry(tuple(reversed(spacing)), tuple(reversed(origin)))
    return Image(values, geometry)


def encode_mha(image: Image) -> bytes:
    values = image.values
    if values.dtype == np.bool_:
        values = values.astype(np.uint8)
    native = values.dtype.newbyteorder("=")
    if native not in _TYPE_NAMES:
        raise FormatError(f"cannot store pixel type {values.dtype} in MetaImage")

    dims = image.dims
    dim_size = " ".join(str(e) for e in reversed(image.extents))
    header = [
        "ObjectType = Image",
        f"NDims = {dims}",
        "BinaryData = True",
        "BinaryDataByteOrderMSB = False",
        "CompressedData = False",
        f"Offset = {' '.join(repr(o) for o in reversed(image.origin))}",
        f"ElementSpacing = {' '.join(repr(s) for s in reversed(image.spacing))}",
        f"DimSize = {dim_size}",
    ]
    if image.channels > 1:
        header.append(f"ElementNumberOfChannels = {image.channels}")
    header.append(f"ElementType = {_TYPE_NAMES[native]}")
    header.append("ElementDataFile = LOCAL")

    payload = np.ascontiguousarray(np.moveaxis(values, 0, -1)).astype(native.newbyteorder("<"), copy=False)
    return ("\n".join(header) + "\n").encode("ascii") + payload.tobytes()
