import logging
from pathlib import Path
from typing import Callable, Dict, Tuple

from medpatch.errors import FormatError, ParseError
from medpatch.imaging.image import Image
from medpatch.imaging.mha import decode_mha, encode_mha
from medpatch.imaging.pnm import decode_raster, encode_raster
from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)

_CODECS: Dict[str, Tuple[Callable[[bytes, str], Image], Callable[[Image], bytes]]] = {
    ".mha": (lambda data, name: decode_mha(data), encode_mha),
    ".pgm": (decode_raster, lambda image: encode_raster(image, "PPM")),
    ".ppm": (decode_raster, lambda image: encode_raster(image, "PPM")),
    ".png": (decode_raster, lambda image: encode_raster(image, "PNG")),
}

SUPPORTED_EXTENSIONS = tuple(sorted(_CODECS))


def _codec(path: Path):
    suffix = path.suffix.lower()
    if suffix not in _CODECS:
        raise FormatError(f"unsupported image extension '{suffix}', expected one of {', '.join(SUPPORTED_EXTENSIONS)}")
    return _CODECS[suffix]


def read_image(path) -> Result[Image]:
    path = Path(path)
    try:
        decode, _ = _codec(path)
        image = decode(path.read_bytes(), str(path))
    except (OSError, ParseError, FormatError) as e:
        return Result.error(f"could not read image {path}", e)
    logger.debug("read %s: %r", path, image)
    return Ok(image)


def write_image(image: Image, path) -> Result[Path]:
    path = Path(path)
    if path.suffix.lower() == ".pgm" and image.channels != 1:
        return Result.error(f"could not write image {path}", FormatError(f".pgm holds one channel, image has {image.channels}"))
    if path.suffix.lower() == ".ppm" and image.channels != 3:
        return Result.error(f"could not write image {path}", FormatError(f".ppm holds three channels, image has {image.channels}"))
    try:
        _, encode = _codec(path)
        payload = encode(image)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except (OSError, FormatError) as e:
        return Result.error(f"could not write image {path}", e)
    return Ok(path)
