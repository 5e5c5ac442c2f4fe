import logging
from dataclasses import dataclass

import numpy as np

from medpatch.errors import ContractError, DimensionError
from medpatch.histology.mining import CoordinateList
from medpatch.histology.pyramid import TiledImage
from medpatch.inference.stitching import CountMap, PredictionMap, Predictor

logger = logging.getLogger(__name__)

INTENSITY_SCALE = 255.0


@dataclass
class TiledPrediction:
    labels: np.ndarray
    probabilities: PredictionMap
    counts: CountMap


def tiled_infer(model: Predictor, tiled: TiledImage, coords: CoordinateList, batch_size: int = 8
                ) -> TiledPrediction:
    """
    Predict every mined level-0 patch and average overlapping outputs.

    Patches are fed as values / 255. The final map is the accumulated
    probabilities times the reciprocal count map; voxels no patch covers
    stay 0 and are not `covered` in the CountMap. Labels are the argmax on
    covered voxels, 0 elsewhere.
    """
    height, width = tiled.extents(0)
    ph, pw = coords.patch_size
    for c in coords:
        if c.x < 0 or c.y < 0 or c.x + pw > width or c.y + ph > height:
            raise ContractError(f"patch at x={c.x}, y={c.y} of {pw}x{ph} lies outside level 0 ({width}x{height})")

    counts = np.zeros((height, width), dtype=np.float64)
    accumulated = None
    items = list(coords)
    for first in range(0, len(items), batch_size):
        chunk = items[first:first + batch_size]
        batch = np.stack([tiled.read_region(0, (c.y, c.x), (ph, pw)) for c in chunk]) / INTENSITY_SCALE
        outputs = np.asarray(model.predict(batch))
        if outputs.ndim != 4 or outputs.shape[2:] != (ph, pw):
            raise DimensionError(f"model output {outputs.shape} does not keep the patch extents {(ph, pw)}")
        if accumulated is None:
            accumulated = np.zeros((outputs.shape[1], height, width), dtype=np.float64)
        for c, out in zip(chunk, outputs):
            accumulated[:, c.y:c.y + ph, c.x:c.x + pw] += out
            counts[c.y:c.y + ph, c.x:c.x + pw] += 1

    count_map = CountMap(counts)
    if accumulated is None:
        logger.info("no coordinates, empty prediction")
        return TiledPrediction(np.zeros((height, width), dtype=np.int64),
                               PredictionMap(np.zeros((1, height, width)), normalized=True), count_map)
    values = accumulated * count_map.reciprocal()
    labels = np.where(count_map.covered, np.argmax(values, axis=0), 0)
    logger.info("tiled inference over %d patches covers %.1f%% of the slide", len(items),
                100.0 * count_map.covered.mean())
    return TiledPrediction(labels, PredictionMap(values, normalized=True), count_map)
