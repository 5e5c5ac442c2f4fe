"""
Sliding-window inference.

Patch starts along an axis step by floor(patch * (1 - overlap)) (at least
1); the last start is clamped to extent - patch so the border is always
covered. Patches are visited in row-major order of their corners and
accumulated in that fixed order.

Average mode divides the accumulated outputs by the per-voxel patch
count. Crop mode keeps, between two neighbouring patches, the half of
the overlap nearer to each patch's center; the first and last patch on an
axis keep their outer margins. Crop regions tile the image exactly.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import List, Protocol, Sequence, Tuple

import numpy as np

from medpatch.errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)

MODES = ("average", "crop")


class Predictor(Protocol):
    def predict(self, batch: np.ndarray) -> np.ndarray:
        """(B, C, *P) -> (B, K, *P)"""


@dataclass
class PredictionMap:
    """Per-class scalar grid (K, *S)."""

    values: np.ndarray
    normalized: bool = False


@dataclass
class CountMap:
    """Per-voxel contribution count (*S)."""

    counts: np.ndarray

    @property
    def covered(self) -> np.ndarray:
        return self.counts > 0

    def reciprocal(self) -> np.ndarray:
        """1 / count where covered, 0 elsewhere."""
        out = np.zeros_like(self.counts, dtype=np.float64)
        np.divide(1.0, self.counts, out=out, where=self.counts > 0)
        return out


def grid_starts(extent: int, patch: int, overlap: float) -> List[int]:
    if not 0 <= overlap < 1:
        raise ConfigError(f"overlap must be in [0, 1), got {overlap}")
    if patch >= extent:
        return [0]
    stride = max(1, int(np.floor(patch * (1 - overlap))))
    starts = list(range(0, extent - patch + 1, stride))
    if starts[-1] != extent - patch:
        starts.append(extent - patch)
    return starts


def crop_bounds(starts: Sequence[int], patch: int, extent: int) -> List[Tuple[int, int]]:
    """Absolute [lo, hi) kept from each patch along one axis."""
    boundaries = [(s + patch + nxt) // 2 for s, nxt in zip(starts[:-1], starts[1:])]
    lows = [0] + boundaries
    highs = boundaries + [extent]
    return list(zip(lows, highs))


def sliding_window_infer(model: Predictor, image: np.ndarray, patch_size: Sequence[int], overlap: float = 0.5,
                         mode: str = "average", batch_size: int = 8) -> Tuple[PredictionMap, CountMap]:
    """
    Predict a (C, *S) image patch by patch.

    An image smaller than the patch on some axis is zero-padded at the end
    up to the patch size and the result cropped back.
    """
    if mode not in MODES:
        raise ConfigError(f"stitching mode must be one of {MODES}, got '{mode}'")
    patch_size = tuple(int(p) for p in patch_size)
    extents = image.shape[1:]
    if len(patch_size) != len(extents):
        raise DimensionError(f"patch_size {patch_size} does not match the {len(extents)} spatial axes of the image")

    padded_extents = tuple(max(n, p) for n, p in zip(extents, patch_size))
    if padded_extents != extents:
        logger.info("image extents %s smaller than patch %s, zero-padding to %s", extents, patch_size, padded_extents)
        image = np.pad(image, [(0, 0)] + [(0, m - n) for n, m in zip(extents, padded_extents)])

    starts = [grid_starts(n, p, overlap) for n, p in zip(padded_extents, patch_size)]
    corners = list(itertools.product(*starts))
    if mode == "crop":
        bounds = [dict(zip(axis_starts, crop_bounds(axis_starts, p, n)))
                  for axis_starts, p, n in zip(starts, patch_size, padded_extents)]

    accumulated = None
    counts = np.zeros(padded_extents, dtype=np.float64)
    for first in range(0, len(corners), batch_size):
        chunk = corners[first:first + batch_size]
        batch = np.stack([image[(slice(None),) + tuple(slice(c, c + p) for c, p in zip(corner, patch_size))]
                          for corner in chunk])
        outputs = np.asarray(model.predict(batch))
        if outputs.ndim != batch.ndim or outputs.shape[2:] != batch.shape[2:]:
            raise DimensionError(f"model output {outputs.shape} does not keep the patch extents {patch_size}")
        if accumulated is None:
            accumulated = np.zeros((outputs.shape[1],) + padded_extents, dtype=np.float64)
        for corner, out in zip(chunk, outputs):
            if mode == "average":
                window = tuple(slice(c, c + p) for c, p in zip(corner, patch_size))
                accumulated[(slice(None),) + window] += out
                counts[window] += 1
            else:
                kept = [bounds[a][c] for a, c in enumerate(corner)]
                window = tuple(slice(lo, hi) for lo, hi in kept)
                local = tuple(slice(lo - c, hi - c) for (lo, hi), c in zip(kept, corner))
                accumulated[(slice(None),) + window] += out[(slice(None),) + local]
                counts[window] += 1

    values = accumulated * CountMap(counts).reciprocal()
    crop_back = tuple(slice(0, n) for n in extents)
    return (PredictionMap(values[(slice(None),) + crop_back], normalized=True),
            CountMap(counts[crop_back]))
