import logging
from typing import Sequence

import numpy as np
from scipy import ndimage

from medpatch.errors import ConfigError

logger = logging.getLogger(__name__)


def fill_holes(labels: np.ndarray) -> np.ndarray:
    """Fill enclosed background holes of every foreground label."""
    out = labels.copy()
    for label in np.unique(labels):
        if label == 0:
            continue
        filled = ndimage.binary_fill_holes(labels == label)
        out[filled & (out == 0)] = label
    return out


def largest_component(labels: np.ndarray) -> np.ndarray:
    """Keep only the largest connected component of each foreground label."""
    out = labels.copy()
    for label in np.unique(labels):
        if label == 0:
            continue
        components, count = ndimage.label(labels == label)
        if count < 2:
            continue
        sizes = np.bincount(components.ravel())
        sizes[0] = 0
        out[(components > 0) & (components != int(np.argmax(sizes)))] = 0
        logger.debug("label %s: kept 1 of %d components", label, count)
    return out


POST_PROCESSORS = {
    "fill_holes": fill_holes,
    "largest_component": largest_component,
}


def post_process(labels: np.ndarray, steps: Sequence[str]) -> np.ndarray:
    for name in steps:
        if name not in POST_PROCESSORS:
            raise ConfigError(f"unknown post-processing step '{name}', accepted: {sorted(POST_PROCESSORS)}")
        labels = POST_PROCESSORS[name](labels)
    return labels
