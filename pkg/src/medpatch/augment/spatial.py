"""
Spatial augmentations. The image is interpolated linearly, the mask with
nearest neighbour, so labels stay within the original label set. Output
extents always equal input extents.
"""

import math
from typing import Sequence

import numpy as np
from scipy import ndimage

from medpatch.augment.plan import Sample, check_axes, draw, grouped
from medpatch.decorators import augmentation
from medpatch.errors import ConfigError
from medpatch.preprocess import resample_array


@augmentation("flip")
@grouped("spatial")
def flip(sample: Sample, rng: np.random.Generator, axes: Sequence[int] = (0,)) -> Sample:
    """Reverse the element order along the given spatial axes."""
    axes = check_axes(axes, sample.dims)
    image = np.flip(sample.image, axis=tuple(a + 1 for a in axes)).copy()
    mask = None if sample.mask is None else np.flip(sample.mask, axis=axes).copy()
    return Sample(image, mask)


@augmentation("rotate")
@grouped("spatial")
def rotate(sample: Sample, rng: np.random.Generator, angle=(90, 180), axes: Sequence[int] = (0, 1)) -> Sample:
    """
    Rigid rotation by 90 or 180 degrees in the plane of two axes. A list of
    angles picks one at random.
    """
    angles = list(angle) if isinstance(angle, (list, tuple)) else [angle]
    if any(a not in (90, 180) for a in angles):
        raise ConfigError(f"rotation angle must be 90 or 180, got {angle}")
    axes = check_axes(axes, sample.dims)
    if len(axes) != 2 or axes[0] == axes[1]:
        raise ConfigError(f"rotation needs two distinct axes, got {axes}")
    chosen = angles[0] if len(angles) == 1 else int(rng.choice(angles))
    if chosen == 90 and sample.extents[axes[0]] != sample.extents[axes[1]]:
        raise ConfigError(f"90 degree rotation needs equal extents on axes {axes}, got {sample.extents}")
    k = chosen // 90
    image = np.rot90(sample.image, k, axes=(axes[0] + 1, axes[1] + 1)).copy()
    mask = None if sample.mask is None else np.rot90(sample.mask, k, axes=axes).copy()
    return Sample(image, mask)


def _plane_rotation(dims: int, a: int, b: int, theta: float) -> np.ndarray:
    r = np.eye(dims)
    c, s = math.cos(theta), math.sin(theta)
    r[a, a], r[a, b], r[b, a], r[b, b] = c, -s, s, c
    return r


def _warp(sample: Sample, matrix: np.ndarray, offset: np.ndarray) -> Sample:
    image = np.stack([ndimage.affine_transform(ch, matrix, offset=offset, order=1, mode="nearest")
                      for ch in sample.image])
    mask = None
    if sample.mask is not None:
        mask = ndimage.affine_transform(sample.mask, matrix, offset=offset, order=0, mode="nearest")
    return Sample(image, mask)


@augmentation("affine")
@grouped("spatial")
def affine(sample: Sample, rng: np.random.Generator, degrees=(-15.0, 15.0), scales=(0.9, 1.1),
           translation=0.0) -> Sample:
    """
    Random rotation (one angle per coordinate plane), isotropic scaling and
    translation (voxels) about the image center.
    """
    dims = sample.dims
    planes = [(a, b) for a in range(dims) for b in range(a + 1, dims)]
    angles = [math.radians(draw(degrees, rng, "degrees")) for _ in planes]
    scale = draw(scales, rng, "scales")
    if scale <= 0:
        raise ConfigError(f"affine scale must be positive, got {scale}")
    span = translation if isinstance(translation, (list, tuple)) else (-translation, translation)
    shift = np.array([draw(span, rng, "translation") for _ in range(dims)])
    if all(a == 0 for a in angles) and scale == 1.0 and not shift.any():
        return sample

    rotation = np.eye(dims)
    for (a, b), theta in zip(planes, angles):
        rotation = rotation @ _plane_rotation(dims, a, b, theta)
    matrix = rotation / scale
    center = (np.array(sample.extents, dtype=np.float64) - 1) / 2
    offset = center - matrix @ center - shift
    return _warp(sample, matrix, offset)


@augmentation("elastic")
@grouped("spatial")
def elastic(sample: Sample, rng: np.random.Generator, control_points: int = 5,
            max_displacement: float = 3.0) -> Sample:
    """
    Dense deformation: a coarse grid of random displacements (voxels, one
    grid per axis) upsampled linearly to the full extents.
    """
    if control_points < 2:
        raise ConfigError(f"elastic control_points must be >= 2, got {control_points}")
    magnitude = draw(max_displacement, rng, "max_displacement")
    if magnitude < 0:
        raise ConfigError(f"elastic max_displacement must be >= 0, got {magnitude}")
    if magnitude == 0:
        return sample

    dims, extents = sample.dims, sample.extents
    coarse = rng.uniform(-magnitude, magnitude, size=(dims,) + (control_points,) * dims)
    grid = np.meshgrid(*[np.arange(n, dtype=np.float64) for n in extents], indexing="ij")
    to_coarse = np.stack([g * ((control_points - 1) / max(n - 1, 1)) for g, n in zip(grid, extents)])
    coords = np.stack([g + ndimage.map_coordinates(coarse[a], to_coarse, order=1, mode="nearest")
                       for a, g in enumerate(grid)])

    image = np.stack([ndimage.map_coordinates(ch, coords, order=1, mode="nearest") for ch in sample.image])
    mask = None
    if sample.mask is not None:
        mask = ndimage.map_coordinates(sample.mask, coords, order=0, mode="nearest")
    return Sample(image, mask)


@augmentation("anisotropy")
@grouped("spatial")
def anisotropy(sample: Sample, rng: np.random.Generator, axes: Sequence[int] = (0,),
               downsampling=(1.5, 5.0)) -> Sample:
    """
    Simulate a coarse acquisition axis: linear down-sampling by a random
    factor along one axis, then back to the original extent. The mask keeps
    its full resolution.
    """
    axes = check_axes(axes, sample.dims)
    axis = axes[0] if len(axes) == 1 else int(rng.choice(axes))
    factor = draw(downsampling, rng, "downsampling")
    if factor < 1:
        raise ConfigError(f"anisotropy downsampling factor must be >= 1, got {factor}")
    n = sample.extents[axis]
    m = max(1, int(round(n / factor)))
    if m == n:
        return sample

    down_extents = list(sample.extents)
    down_extents[axis] = m
    ratios = [1.0] * sample.dims
    ratios[axis] = n / m
    low = resample_array(sample.image, down_extents, ratios, "linear")
    ratios[axis] = m / n
    image = resample_array(low, sample.extents, ratios, "linear")
    return Sample(image, sample.mask)
