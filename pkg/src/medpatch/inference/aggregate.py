"""
Cross-fold aggregation of per-model outputs.

segmentation: voxelwise mean of the (K, *S) probability maps, then argmax
regression: mean of the predicted values
classification: majority vote of the per-fold argmax; ties go to the
class with the higher mean probability, then to the lowest index

Outputs are summed in a canonical order (sorted by their bytes), so the
result does not depend on the order in which folds are given.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from medpatch.errors import ConfigError, ContractError, DimensionError
from medpatch.models.spec import TASKS


@dataclass
class Aggregate:
    prediction: Union[np.ndarray, float, int]
    probabilities: Optional[np.ndarray] = None


def _canonical_mean(outputs: Sequence[np.ndarray]) -> np.ndarray:
    ordered = sorted(outputs, key=lambda a: a.tobytes())
    total = np.zeros_like(ordered[0])
    for a in ordered:
        total += a
    return total / len(ordered)


def aggregate_folds(outputs: Sequence, task: str) -> Aggregate:
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got '{task}'")
    if not len(outputs):
        raise ContractError("aggregate_folds needs at least one fold output")
    arrays = [np.asarray(o, dtype=np.float64) for o in outputs]
    shapes = sorted({a.shape for a in arrays})
    if len(shapes) != 1:
        raise DimensionError(f"fold outputs have mixed shapes: {shapes}")

    if task == "regression":
        return Aggregate(float(_canonical_mean([a.reshape(-1) for a in arrays]).mean()))

    mean = _canonical_mean(arrays)
    if task == "segmentation":
        if mean.ndim < 2:
            raise DimensionError(f"segmentation outputs must be (K, *S) maps, got shape {mean.shape}")
        return Aggregate(np.argmax(mean, axis=0), mean)

    if mean.ndim != 1:
        raise DimensionError(f"classification outputs must be (K,) probabilities, got shape {mean.shape}")
    votes = np.bincount([int(np.argmax(a)) for a in arrays], minlength=mean.size)
    tied = np.flatnonzero(votes == votes.max())
    # argmax picks the first, lowest index among equal means
    winner = int(tied[np.argmax(mean[tied])])
    return Aggregate(winner, mean)
