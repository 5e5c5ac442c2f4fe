"""
Intensity normalization and data harmonization.

Every transform takes and returns an Image; none modifies its input.
The registered steps (threshold, clip, rescale, zscore, resample,
crop_zero_planes) are what the `data_preprocessing` configuration list
names, applied left to right by apply_pipeline().
"""

import inspect
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from medpatch.decorators import preprocessor
from medpatch.errors import ConfigError, DegenerateInputError, DimensionError
from medpatch.imaging.image import Image, ImageGeometry
from medpatch.registry import lookup
from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IntensityRange:
    min: float
    max: float

    def __post_init__(self):
        if math.isnan(self.min) or math.isnan(self.max):
            raise ConfigError(f"intensity range bounds must be numbers, got [{self.min}, {self.max}]")
        if self.min > self.max:
            raise ConfigError(f"intensity range min {self.min} exceeds max {self.max}")


def _float(image: Image) -> np.ndarray:
    return image.values.astype(np.float64)


def threshold(image: Image, rng: IntensityRange) -> Image:
    """Voxels outside [min, max] become 0, the rest are kept."""
    x = _float(image)
    return image.with_values(np.where((x < rng.min) | (x > rng.max), 0.0, x))


def clip(image: Image, rng: IntensityRange) -> Image:
    """Voxels below min become min, above max become max."""
    return image.with_values(np.clip(_float(image), rng.min, rng.max))


def rescale(image: Image, out_min: float = 0.0, out_max: float = 1.0) -> Image:
    """Affine map of each channel's [min, max] onto [out_min, out_max]."""
    if not out_min < out_max:
        raise ConfigError(f"rescale needs out_min < out_max, got [{out_min}, {out_max}]")
    x = _float(image)
    out = np.empty_like(x)
    for c in range(x.shape[0]):
        lo, hi = x[c].min(), x[c].max()
        if lo == hi:
            raise DegenerateInputError(f"channel {c} is constant ({lo}), it has no intensity range to rescale")
        out[c] = out_min + (x[c] - lo) * ((out_max - out_min) / (hi - lo))
    return image.with_values(out)


ZSCORE_MODES = ("full", "nonzero", "explicit")


def zscore(image: Image, mode: str = "full", mask: Optional[np.ndarray] = None) -> Image:
    """
    Per-channel standardization using the population standard deviation.

    mode "full" uses every voxel, "nonzero" the channel's nonzero voxels and
    "explicit" the nonzero voxels of `mask` (spatial extents of the image).
    In the masked modes voxels outside the region are set to 0.
    """
    if mode not in ZSCORE_MODES:
        raise ConfigError(f"zscore mode must be one of {ZSCORE_MODES}, got '{mode}'")
    if mode == "explicit":
        if mask is None:
            raise ConfigError("zscore mode 'explicit' needs a mask")
        mask = np.asarray(mask)
        if mask.shape != image.extents:
            raise DimensionError(f"zscore mask extents {mask.shape} differ from image extents {image.extents}")

    x = _float(image)
    out = np.zeros_like(x)
    for c in range(x.shape[0]):
        if mode == "full":
            region = np.ones(image.extents, dtype=bool)
        elif mode == "nonzero":
            region = x[c] != 0
        else:
            region = mask != 0
        selected = x[c][region]
        if selected.size < 2:
            raise DegenerateInputError(f"channel {c}: zscore region has {selected.size} voxel(s), needs >= 2")
        mean = selected.mean()
        std = selected.std()
        if std == 0:
            raise DegenerateInputError(f"channel {c}: zscore region has zero variance")
        out[c][region] = (selected - mean) / std
    return image.with_values(out)


def _axis_coordinates(n_old: int, n_new: int, ratio: float) -> np.ndarray:
    """Center-aligned source coordinate of every output sample, clamped to the grid."""
    x = (np.arange(n_new) + 0.5) * ratio - 0.5
    return np.clip(x, 0.0, n_old - 1)


def resample_array(values: np.ndarray, new_extents: Sequence[int], ratios: Sequence[float],
                   interp: str = "linear") -> np.ndarray:
    """
    Separable resampling of (C, *S) values.

    ratios[a] is new spacing / old spacing on spatial axis a. Linear
    interpolation is written v0 + f * (v1 - v0) so constants come out exact.
    """
    if interp not in ("linear", "nearest"):
        raise ConfigError(f"interpolation must be 'linear' or 'nearest', got '{interp}'")
    out = values if interp == "nearest" else values.astype(np.float64)
    for axis, (n_new, ratio) in enumerate(zip(new_extents, ratios), start=1):
        n_old = out.shape[axis]
        if n_new == n_old and ratio == 1.0:
            continue
        x = _axis_coordinates(n_old, n_new, ratio)
        if interp == "nearest":
            out = np.take(out, np.floor(x + 0.5).astype(np.intp).clip(0, n_old - 1), axis=axis)
            continue
        i0 = np.floor(x).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_old - 1)
        shape = [1] * out.ndim
        shape[axis] = n_new
        f = (x - i0).reshape(shape)
        v0 = np.take(out, i0, axis=axis)
        v1 = np.take(out, i1, axis=axis)
        out = v0 + f * (v1 - v0)
    return out


def resample(image: Image, spacing: Optional[Sequence[float]] = None, extents: Optional[Sequence[int]] = None,
             interp: str = "linear") -> Image:
    """
    Resample to a target spacing (new extents follow) or to target extents
    (new spacing follows). The physical extent is kept within one voxel.
    """
    if (spacing is None) == (extents is None):
        raise ConfigError("resample needs exactly one of spacing or extents")
    old_extents, old_spacing = image.extents, image.spacing
    target = spacing if spacing is not None else extents
    if len(target) != image.dims:
        raise DimensionError(f"resample target has {len(target)} entries, image has {image.dims} axes")
    if not all(t > 0 for t in target):
        raise ConfigError(f"resample targets must be positive, got {tuple(target)}")

    if spacing is not None:
        new_spacing = tuple(float(s) for s in spacing)
        new_extents = tuple(max(1, int(round(n * sp / nsp))) for n, sp, nsp in zip(old_extents, old_spacing, new_spacing))
    else:
        new_extents = tuple(int(e) for e in extents)
        new_spacing = tuple(sp * n / m for n, sp, m in zip(old_extents, old_spacing, new_extents))

    if new_extents == old_extents and new_spacing == old_spacing:
        return image
    ratios = [nsp / sp for sp, nsp in zip(old_spacing, new_spacing)]
    values = resample_array(image.values, new_extents, ratios, interp)
    origin = tuple(o - 0.5 * sp + 0.5 * nsp for o, sp, nsp in zip(image.origin, old_spacing, new_spacing))
    return Image(values, ImageGeometry(new_spacing, origin))


@dataclass(frozen=True)
class CropRecord:
    """Where a cropped image sits inside the original grid."""

    offset: Tuple[int, ...]
    original_extents: Tuple[int, ...]
    original_origin: Tuple[float, ...] = ()


def crop_zero_planes(image: Image, companions: Sequence[Image] = ()) -> Tuple[Image, List[Image], CropRecord]:
    """Remove leading and trailing all-zero hyperplanes (over all channels) on every axis."""
    for companion in companions:
        if companion.extents != image.extents:
            raise DimensionError(f"companion extents {companion.extents} differ from image extents {image.extents}")
    nonzero = np.any(image.values != 0, axis=0)
    if not nonzero.any():
        raise DegenerateInputError("image is entirely zero, nothing to crop to")

    bounds = []
    for axis in range(image.dims):
        other = tuple(a for a in range(image.dims) if a != axis)
        hits = np.flatnonzero(nonzero.any(axis=other) if other else nonzero)
        bounds.append((int(hits[0]), int(hits[-1]) + 1))
    window = (slice(None),) + tuple(slice(lo, hi) for lo, hi in bounds)
    offset = tuple(lo for lo, _ in bounds)

    def cut(img: Image) -> Image:
        origin = tuple(o + lo * sp for o, lo, sp in zip(img.origin, offset, img.spacing))
        return Image(img.values[window].copy(), ImageGeometry(img.spacing, origin))

    record = CropRecord(offset, image.extents, image.origin)
    return cut(image), [cut(c) for c in companions], record


def uncrop(image: Image, record: CropRecord) -> Image:
    """Zero-pad a cropped image back onto its original grid."""
    if len(record.offset) != image.dims:
        raise DimensionError(f"crop record has {len(record.offset)} axes, image has {image.dims}")
    for lo, n, total in zip(record.offset, image.extents, record.original_extents):
        if lo + n > total:
            raise DimensionError(f"cropped extents {image.extents} at {record.offset} exceed {record.original_extents}")
    out = np.zeros((image.channels,) + tuple(record.original_extents), dtype=image.values.dtype)
    window = (slice(None),) + tuple(slice(lo, lo + n) for lo, n in zip(record.offset, image.extents))
    out[window] = image.values
    origin = record.original_origin or tuple(
        o - lo * sp for o, lo, sp in zip(image.origin, record.offset, image.spacing))
    return Image(out, ImageGeometry(image.spacing, origin))


@dataclass(frozen=True)
class ResampleRecord:
    """The grid an image had before it was resampled."""

    original_extents: Tuple[int, ...]
    original_geometry: ImageGeometry


GridRecord = Union[CropRecord, ResampleRecord]


def undo_grid_change(image: Image, record: GridRecord) -> Image:
    """Map an image back across one crop or resample (labels: nearest neighbour)."""
    if isinstance(record, CropRecord):
        return uncrop(image, record)
    if image.extents != tuple(record.original_extents):
        image = resample(image, extents=record.original_extents, interp="nearest")
    return Image(image.values, record.original_geometry)


# registered pipeline steps: (image, mask, **params) -> (image, mask, grid record or None)

@preprocessor("threshold")
def threshold_step(image, mask, min=-math.inf, max=math.inf):
    return threshold(image, IntensityRange(float(min), float(max))), mask, None


@preprocessor("clip")
def clip_step(image, mask, min=-math.inf, max=math.inf):
    return clip(image, IntensityRange(float(min), float(max))), mask, None


@preprocessor("rescale")
def rescale_step(image, mask, out_min=0.0, out_max=1.0):
    return rescale(image, float(out_min), float(out_max)), mask, None


@preprocessor("zscore")
def zscore_step(image, mask, mode="full"):
    region = None
    if mode == "explicit":
        if mask is None:
            raise ConfigError("zscore mode 'explicit' uses the subject's label mask, which is missing")
        region = mask.values[0] != 0
    return zscore(image, mode, region), mask, None


@preprocessor("resample")
def resample_step(image, mask, spacing=None, extents=None, interp="linear"):
    out = resample(image, spacing=spacing, extents=extents, interp=interp)
    if mask is not None:
        mask = resample(mask, spacing=spacing, extents=extents, interp="nearest")
    if out is image:
        return out, mask, None
    return out, mask, ResampleRecord(image.extents, image.geometry)


@preprocessor("crop_zero_planes")
def crop_zero_planes_step(image, mask):
    cropped, companions, record = crop_zero_planes(image, [mask] if mask is not None else [])
    return cropped, (companions[0] if companions else None), record


@dataclass(frozen=True)
class Step:
    name: str
    fn: Callable
    params: Dict[str, Any]


def parse_steps(entries: Sequence, plugins_path: Optional[str] = None) -> Result[List[Step]]:
    """
    Resolve `data_preprocessing` entries: each a step name or a one-key
    mapping {name: {param: value}}.
    """
    steps = []
    for index, entry in enumerate(entries or []):
        if isinstance(entry, str):
            name, params = entry, {}
        elif isinstance(entry, dict) and len(entry) == 1:
            name, params = next(iter(entry.items()))
            params = dict(params or {})
        else:
            return Result.error(f"data_preprocessing[{index}] must be a name or a single-key mapping, got {entry!r}")
        res = lookup("preprocessor", name, plugins_path)
        if not res:
            return Result.error(f"data_preprocessing[{index}]: unknown step '{name}'", res)
        fn = res.unwrapped
        try:
            inspect.signature(fn).bind(None, None, **params)
        except TypeError as e:
            return Result.error(f"data_preprocessing[{index}]: invalid parameters for '{name}'", e)
        steps.append(Step(name, fn, params))
    return Ok(steps)


def apply_pipeline(steps: Sequence[Step], image: Image, mask: Optional[Image] = None
                   ) -> Tuple[Image, Optional[Image], List[GridRecord]]:
    """
    Run the steps in order. The returned records (crops and resamples, in
    application order) are what undo_grid_change() walks back in reverse.
    """
    records = []
    for step in steps:
        image, mask, record = step.fn(image, mask, **step.params)
        if record is not None:
            records.append(record)
        logger.debug("preprocess %s -> %r", step.name, image)
    return image, mask, records
