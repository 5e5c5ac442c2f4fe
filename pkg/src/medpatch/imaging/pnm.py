"""
2D raster formats through Pillow: binary PGM (P5), PPM (P6) and PNG.

Values are kept as stored (maxval 255 maps to 0..255, no rescaling).
These formats carry no geometry, so images read with unit spacing and
zero origin.
"""

import io

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from medpatch.errors import FormatError, ParseError
from medpatch.imaging.image import Image

_MODES = {"L": 1, "RGB": 3, "I;16": 1, "I;16B": 1, "I": 1}


def decode_raster(data: bytes, name: str = "<memory>") -> Image:
    try:
        with PILImage.open(io.BytesIO(data)) as pil:
            pil.load()
            mode = pil.mode
            if mode not in _MODES:
                raise FormatError(f"{name}: pixel mode {mode} is not supported, expected grayscale or RGB")
            array = np.array(pil)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as e:
        raise ParseError(f"{name}: not a readable PGM/PPM/PNG raster: {e}", offset=0) from e

    if array.ndim == 2:
        return Image.from_array(array)
    return Image(np.moveaxis(array, -1, 0))


def _as_uint8(image: Image) -> np.ndarray:
    values = image.values
    if image.dims != 2:
        raise FormatError(f"PGM/PPM/PNG hold 2D images, got {image.dims} spatial axes")
    if image.channels not in (1, 3):
        raise FormatError(f"PGM/PPM/PNG hold 1 or 3 channels, got {image.channels}")
    if values.dtype == np.uint8:
        return values
    if not np.all(np.isfinite(values)) or values.min() < 0 or values.max() > 255 or np.any(values != np.round(values)):
        raise FormatError(f"values of dtype {values.dtype} are not representable as 8-bit pixels")
    return values.astype(np.uint8)


def encode_raster(image: Image, fmt: str) -> bytes:
    """fmt is the Pillow format name: "PPM" (P5/P6 by channel count) or "PNG"."""
    values = _as_uint8(image)
    array = values[0] if image.channels == 1 else np.moveaxis(values, 0, -1)
    pil = PILImage.fromarray(np.ascontiguousarray(array))
    buffer = io.BytesIO()
    pil.save(buffer, format=fmt)
    return buffer.getvalue()
