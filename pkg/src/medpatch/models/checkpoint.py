"""
Checkpoint files (.mpck).

Little-endian layout:

    magic            4 bytes  b"MPCK"
    format version   u16
    artifact version u16 length + utf-8 string
    header           u32 length + utf-8 YAML {arch: ArchSpec fields, meta: {...}}
    blob count       u32
    blobs            u16 name length + utf-8 name, u8 dtype code, u8 ndim,
                     ndim x u32 extents, raw little-endian values

Parameters and buffers are stored by their ParamStore names; buffers carry
the "buffer:" prefix.
"""

import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import yaml

from medpatch.errors import ContractError, FormatError, ParseError
from medpatch.models.graph import ModelGraph, build_model
from medpatch.models.spec import ArchSpec
from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)

MAGIC = b"MPCK"
FORMAT_VERSION = 1
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<f4")}
_DTYPE_CODES = {dtype: code for code, dtype in _DTYPES.items()}


def _artifact_version() -> str:
    from medpatch import __version__
    return __version__


def _major(version: str) -> str:
    return version.split(".", 1)[0]


def encode_checkpoint(spec: ArchSpec, state: Dict[str, np.ndarray], meta: Optional[Dict[str, Any]] = None) -> bytes:
    version = _artifact_version().encode("utf-8")
    header = yaml.safe_dump({"arch": spec.as_dict(), "meta": dict(meta or {})}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<H", FORMAT_VERSION),
             struct.pack("<H", len(version)), version,
             struct.pack("<I", len(header)), header,
             struct.pack("<I", len(state))]
    for name, value in state.items():
        arr = np.ascontiguousarray(value)
        dtype = arr.dtype.newbyteorder("<")
        if dtype not in _DTYPE_CODES:
            raise FormatError(f"cannot store '{name}' of dtype {arr.dtype}, only float64/float32 are supported")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", _DTYPE_CODES[dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype(dtype, copy=False).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.data):
            raise ParseError(f"checkpoint truncated while reading {what}", offset=self.offset)
        chunk = self.data[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes) -> Tuple[ArchSpec, Dict[str, np.ndarray], Dict[str, Any]]:
    reader = _Reader(data)
    magic = reader.take(4, "magic")
    if magic != MAGIC:
        raise ParseError(f"not a medpatch checkpoint, magic is {magic!r}", offset=0)
    (fmt_version,) = reader.unpack("<H", "format version")
    if fmt_version != FORMAT_VERSION:
        raise FormatError(f"checkpoint format version {fmt_version} is not supported, expected {FORMAT_VERSION}")

    (length,) = reader.unpack("<H", "artifact version")
    saved_version = reader.take(length, "artifact version").decode("utf-8")
    current = _artifact_version()
    if _major(saved_version) != _major(current):
        raise FormatError(f"checkpoint written by medpatch {saved_version}, incompatible with {current}")
    if saved_version != current:
        logger.warning("checkpoint written by medpatch %s, running %s", saved_version, current)

    (length,) = reader.unpack("<I", "header")
    header_offset = reader.offset
    try:
        header = yaml.safe_load(reader.take(length, "header").decode("utf-8"))
    except yaml.YAMLError as e:
        raise ParseError(f"checkpoint header is not valid YAML: {e}", offset=header_offset) from e
    if not isinstance(header, dict) or "arch" not in header:
        raise ParseError("checkpoint header has no 'arch' section", offset=header_offset)
    spec = ArchSpec.from_dict(header["arch"])

    (count,) = reader.unpack("<I", "blob count")
    state = {}
    for _ in range(count):
        (length,) = reader.unpack("<H", "blob name")
        name = reader.take(length, "blob name").decode("utf-8")
        code, ndim = reader.unpack("<BB", f"dtype of '{name}'")
        if code not in _DTYPES:
            raise FormatError(f"blob '{name}' has unknown dtype code {code}")
        shape = reader.unpack(f"<{ndim}I", f"extents of '{name}'")
        dtype = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        state[name] = np.frombuffer(reader.take(nbytes, f"values of '{name}'"), dtype=dtype).reshape(shape).copy()
    if reader.offset != len(data):
        raise ParseError(f"{len(data) - reader.offset} trailing bytes after the last blob", offset=reader.offset)
    return spec, state, header.get("meta") or {}


def save_checkpoint(model: ModelGraph, path, meta: Optional[Dict[str, Any]] = None) -> Result[Path]:
    path = Path(path)
    try:
        payload = encode_checkpoint(model.spec, model.params.state(), meta)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(payload)
        tmp.replace(path)
    except (OSError, FormatError) as e:
        return Result.error(f"could not write checkpoint {path}", e)
    return Ok(path)


def load_checkpoint(path, plugins_path: Optional[str] = None) -> Result[Tuple[ModelGraph, Dict[str, Any]]]:
    """Rebuild the model described by the checkpoint and load its weights."""
    path = Path(path)
    try:
        spec, state, meta = decode_checkpoint(path.read_bytes())
    except (OSError, ParseError, FormatError) as e:
        return Result.error(f"could not read checkpoint {path}", e)
    except Exception as e:
        return Result.error(f"invalid checkpoint contents in {path}", e)

    res = build_model(spec, plugins_path=plugins_path)
    if not res:
        return Result.error(f"could not rebuild the model stored in {path}", res)
    model = res.unwrapped
    try:
        model.params.load_state(state)
    except ContractError as e:
        return Result.error(f"checkpoint {path} does not match its architecture", e)
    return Ok((model, meta))
