from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from medpatch.errors import ConfigError, DimensionError


@dataclass(frozen=True)
class ImageGeometry:
    """Physical placement of the voxel grid, one entry per spatial axis in array order (mm)."""

    spacing: Tuple[float, ...]
    origin: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        if len(self.spacing) != len(self.origin):
            raise DimensionError(f"geometry has {len(self.spacing)} spacing and {len(self.origin)} origin entries")
        if not all(s > 0 for s in self.spacing):
            raise ConfigError(f"spacing must be strictly positive on every axis, got {self.spacing}")

    @classmethod
    def unit(cls, dims: int) -> "ImageGeometry":
        return cls((1.0,) * dims, (0.0,) * dims)

    @property
    def dims(self) -> int:
        return len(self.spacing)


@dataclass
class Image:
    """
    Multi-channel scalar grid.

    values has shape (channels, *extents); extents follow numpy axis order,
    so for MetaImage files the axes are reversed with respect to DimSize.
    """

    values: np.ndarray
    geometry: Optional[ImageGeometry] = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim < 2:
            raise DimensionError(f"image values need a channel axis and >= 1 spatial axis, got shape {self.values.shape}")
        if self.geometry is None:
            self.geometry = ImageGeometry.unit(self.values.ndim - 1)
        if self.geometry.dims != self.values.ndim - 1:
            raise DimensionError(
                f"geometry describes {self.geometry.dims} axes, values have {self.values.ndim - 1} spatial axes")

    @classmethod
    def from_array(cls, array: np.ndarray, spacing: Optional[Sequence[float]] = None,
                   origin: Optional[Sequence[float]] = None) -> "Image":
        """Single-channel image from a bare spatial array."""
        array = np.asarray(array)
        dims = array.ndim
        geometry = ImageGeometry(tuple(spacing or (1.0,) * dims), tuple(origin or (0.0,) * dims))
        return cls(array[np.newaxis], geometry)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def extents(self) -> Tuple[int, ...]:
        return tuple(self.values.shape[1:])

    @property
    def dims(self) -> int:
        return self.values.ndim - 1

    @property
    def spacing(self) -> Tuple[float, ...]:
        return self.geometry.spacing

    @property
    def origin(self) -> Tuple[float, ...]:
        return self.geometry.origin

    def with_values(self, values: np.ndarray, geometry: Optional[ImageGeometry] = None) -> "Image":
        return replace(self, values=values, geometry=geometry or self.geometry)

    def __repr__(self) -> str:
        return f"Image(channels={self.channels}, extents={self.extents}, spacing={self.spacing}, dtype={self.values.dtype})"
