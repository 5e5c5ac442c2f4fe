"""Intensity augmentations: the mask is never touched and extents never change."""

import math

import numpy as np
from scipy import ndimage

from medpatch.augment.plan import Sample, draw, grouped
from medpatch.decorators import augmentation
from medpatch.errors import ConfigError

BOUNDARY_MODES = ("reflect", "nearest", "mirror", "wrap", "constant")


@augmentation("blur")
@grouped("intensity")
def blur(sample: Sample, rng: np.random.Generator, std=(0.0, 1.5), mode: str = "reflect") -> Sample:
    """Gaussian filter with a random sigma (voxels), applied over the spatial axes of each channel."""
    sigma = draw(std, rng, "std")
    if sigma < 0:
        raise ConfigError(f"blur sigma must be >= 0, got {sigma}")
    if mode not in BOUNDARY_MODES:
        raise ConfigError(f"blur mode must be one of {BOUNDARY_MODES}, got '{mode}'")
    if sigma == 0:
        return sample
    image = ndimage.gaussian_filter(sample.image, sigma=(0.0,) + (sigma,) * sample.dims, mode=mode)
    return sample.with_image(image)


@augmentation("noise")
@grouped("intensity")
def noise(sample: Sample, rng: np.random.Generator, mean=0.0, std=(0.0, 0.25)) -> Sample:
    """Additive Gaussian noise; mean and std are fixed numbers or [low, high] ranges."""
    mu = draw(mean, rng, "mean")
    sigma = draw(std, rng, "std")
    if sigma < 0:
        raise ConfigError(f"noise sigma must be >= 0, got {sigma}")
    return sample.with_image(sample.image + rng.normal(mu, sigma, size=sample.image.shape))


@augmentation("gamma")
@grouped("intensity")
def gamma(sample: Sample, rng: np.random.Generator, log_gamma=(-0.3, 0.3), gamma=None) -> Sample:
    """
    x -> x ** gamma on each channel rescaled to [0, 1], then mapped back to
    the channel's original range. gamma = exp(uniform(log_gamma)) unless
    given explicitly. Constant channels are left as they are.
    """
    g = draw(gamma, rng, "gamma") if gamma is not None else math.exp(draw(log_gamma, rng, "log_gamma"))
    if g <= 0:
        raise ConfigError(f"gamma must be positive, got {g}")
    if g == 1.0:
        return sample
    image = sample.image.copy()
    for c in range(image.shape[0]):
        lo, hi = image[c].min(), image[c].max()
        if lo == hi:
            continue
        unit = (image[c] - lo) / (hi - lo)
        image[c] = lo + np.power(unit, g) * (hi - lo)
    return sample.with_image(image)
