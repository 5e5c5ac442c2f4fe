"""
Augmentation plans and their stochastic application.

Every augmentation is a registered function

    fn(sample: Sample, rng: numpy.random.Generator, **params) -> Sample

tagged with a `group` attribute: "spatial" (image and mask move
together), "intensity" (mask untouched) or "kspace" (single-channel,
Fourier-domain artifacts).
"""

import inspect
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from medpatch.errors import ConfigError, ContractError, DimensionError
from medpatch.registry import lookup
from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)

DEFAULT_PROBABILITY = 0.35
GROUPS = ("spatial", "intensity", "kspace")


@dataclass
class Sample:
    """Image (C, *S) as float64 with an optional integer label map (*S)."""

    image: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        if self.image.ndim < 2:
            raise DimensionError(f"sample image needs (C, *S) shape, got {self.image.shape}")
        if self.mask is not None and self.mask.shape != self.image.shape[1:]:
            raise DimensionError(f"mask extents {self.mask.shape} differ from image extents {self.image.shape[1:]}")

    @property
    def dims(self) -> int:
        return self.image.ndim - 1

    @property
    def extents(self) -> Tuple[int, ...]:
        return tuple(self.image.shape[1:])

    def with_image(self, image: np.ndarray) -> "Sample":
        return replace(self, image=image)


def draw(value, rng: np.random.Generator, name: str = "value") -> float:
    """A fixed number, or a uniform draw from a [low, high] pair."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"{name} range must be [low, high], got {value}")
        low, high = float(value[0]), float(value[1])
        if low > high:
            raise ConfigError(f"{name} range [{low}, {high}] is not ordered")
        return low if low == high else float(rng.uniform(low, high))
    return float(value)


def check_axes(axes: Sequence[int], dims: int) -> Tuple[int, ...]:
    axes = tuple(int(a) for a in ([axes] if isinstance(axes, int) else axes))
    bad = [a for a in axes if not 0 <= a < dims]
    if bad:
        raise ConfigError(f"axes {bad} do not exist in a {dims}D sample (valid: 0..{dims - 1})")
    return axes


def _check_ranges(kind: str, params: Dict[str, Any]) -> None:
    for key, value in params.items():
        if isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
            if value[0] > value[1]:
                raise ConfigError(f"{kind}.{key} range [{value[0]}, {value[1]}] is not ordered")


@dataclass(frozen=True)
class PlanEntry:
    kind: str
    fn: Any = field(repr=False)
    params: Dict[str, Any] = field(default_factory=dict)
    probability: float = DEFAULT_PROBABILITY

    @property
    def group(self) -> str:
        return self.fn.group


@dataclass(frozen=True)
class AugmentationPlan:
    entries: Tuple[PlanEntry, ...] = ()

    @classmethod
    def from_config(cls, mapping: Optional[Dict[str, Any]], plugins_path: Optional[str] = None
                    ) -> Result["AugmentationPlan"]:
        """
        Build from the `data_augmentation` map: kind -> {probability, **params}.
        Mapping order is plan order.
        """
        entries = []
        for kind, spec in (mapping or {}).items():
            params = dict(spec or {})
            probability = float(params.pop("probability", DEFAULT_PROBABILITY))
            if not 0.0 <= probability <= 1.0:
                return Result.error(f"data_augmentation.{kind}: probability must be in [0, 1], got {probability}")
            res = lookup("augmentation", kind, plugins_path)
            if not res:
                return Result.error(f"data_augmentation: unknown augmentation '{kind}'", res)
            fn = res.unwrapped
            try:
                _check_ranges(kind, params)
                inspect.signature(fn).bind(None, None, **params)
            except (TypeError, ConfigError) as e:
                return Result.error(f"data_augmentation.{kind}: invalid parameters", e)
            entries.append(PlanEntry(kind, fn, params, probability))
        return Ok(cls(tuple(entries)))

    def __len__(self) -> int:
        return len(self.entries)


def apply_entry(entry: PlanEntry, sample: Sample, rng: np.random.Generator) -> Sample:
    if entry.group == "kspace" and sample.image.shape[0] > 1:
        channels = [entry.fn(Sample(sample.image[c:c + 1], sample.mask), rng, **entry.params).image
                    for c in range(sample.image.shape[0])]
        return sample.with_image(np.concatenate(channels, axis=0))
    return entry.fn(sample, rng, **entry.params)


def compose(plan: AugmentationPlan, sample: Sample, rng: np.random.Generator) -> Sample:
    """Apply each entry with its probability, in plan order."""
    for entry in plan.entries:
        if rng.random() < entry.probability:
            sample = apply_entry(entry, sample, rng)
    return sample


def _apply(group: str, sample: Sample, kind: str, params: Optional[Dict[str, Any]], rng: np.random.Generator,
           plugins_path: Optional[str] = None) -> Sample:
    res = lookup("augmentation", kind, plugins_path)
    if not res:
        raise ConfigError(f"unknown augmentation '{kind}': {res.error}")
    fn = res.unwrapped
    if fn.group != group:
        raise ConfigError(f"'{kind}' is a {fn.group} augmentation, not {group}")
    return fn(sample, rng, **(params or {}))


def apply_spatial(sample: Sample, kind: str, params: Optional[Dict[str, Any]], rng: np.random.Generator) -> Sample:
    return _apply("spatial", sample, kind, params, rng)


def apply_intensity(sample: Sample, kind: str, params: Optional[Dict[str, Any]], rng: np.random.Generator) -> Sample:
    return _apply("intensity", sample, kind, params, rng)


def apply_kspace(sample: Sample, kind: str, params: Optional[Dict[str, Any]], rng: np.random.Generator) -> Sample:
    if sample.image.shape[0] != 1:
        raise ContractError(f"k-space augmentation '{kind}' takes one channel, got {sample.image.shape[0]}")
    return _apply("kspace", sample, kind, params, rng)


def grouped(group: str):
    """Tag an augmentation function with its group."""
    if group not in GROUPS:
        raise ConfigError(f"unknown augmentation group '{group}', expected one of {list(GROUPS)}")

    def decorator(fn):
        fn.group = group
        return fn
    return decorator

