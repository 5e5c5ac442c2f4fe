"""
Tissue masks: grayscale Otsu threshold plus a near-white RGB rejection.
Values are expected on the 0..255 scale.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from medpatch.errors import DegenerateInputError, DimensionError
from medpatch.histology.pyramid import TiledImage

logger = logging.getLogger(__name__)

GRAY_WEIGHTS = (0.299, 0.587, 0.114)
WHITE_LEVEL = 240
BINS = 256


@dataclass
class TissueMask:
    mask: np.ndarray
    level: int
    scale: int
    base_extents: Tuple[int, ...]

    @property
    def extents(self) -> Tuple[int, ...]:
        return tuple(self.mask.shape)


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """(3, H, W) -> (H, W) luma."""
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise DimensionError(f"expected an RGB (3, H, W) array, got shape {rgb.shape}")
    r, g, b = (rgb[i].astype(np.float64) for i in range(3))
    return GRAY_WEIGHTS[0] * r + GRAY_WEIGHTS[1] * g + GRAY_WEIGHTS[2] * b


def gray_histogram(gray: np.ndarray) -> np.ndarray:
    levels = np.clip(np.rint(gray), 0, BINS - 1).astype(np.int64)
    return np.bincount(levels.ravel(), minlength=BINS)


def otsu_threshold(histogram) -> int:
    """
    Cut t in 0..254 maximising the between-class variance of {<= t} and {> t}.

    Compared exactly in integers through (N S0 - n0 S)^2 / (n0 n1); the
    lowest t wins ties.
    """
    counts = [int(c) for c in histogram]
    if any(c < 0 for c in counts):
        raise DimensionError("histogram counts must be non-negative")
    total = sum(counts)
    weighted = sum(i * c for i, c in enumerate(counts))
    best, best_num, best_den = None, 0, 1
    n0 = s0 = 0
    for t in range(len(counts) - 1):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (total * s0 - n0 * weighted) ** 2
        den = n0 * n1
        if best is None or num * best_den > best_num * den:
            best, best_num, best_den = t, num, den
    if best is None:
        raise DegenerateInputError("single-intensity histogram, no threshold separates two classes")
    return best


def tissue_mask(tiled: TiledImage, level: int) -> TissueMask:
    """Pixels darker than the Otsu threshold that are not near-white in every channel."""
    image = tiled.level(level)
    rgb = image.values
    gray = to_gray(rgb)
    colored = ~(rgb.min(axis=0) > WHITE_LEVEL)
    base = tiled.extents(0)
    if not colored.any():
        logger.info("level %d is blank (every pixel near-white), empty tissue mask", level)
        return TissueMask(np.zeros(gray.shape, dtype=bool), level, tiled.scale(level), base)
    threshold = otsu_threshold(gray_histogram(gray))
    mask = (np.clip(np.rint(gray), 0, BINS - 1) <= threshold) & colored
    logger.info("tissue mask at level %d: threshold %d, %.1f%% tissue", level, threshold, 100.0 * mask.mean())
    return TissueMask(mask, level, tiled.scale(level), base)
