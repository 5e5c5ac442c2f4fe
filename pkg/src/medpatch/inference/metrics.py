"""
Evaluation metrics.

Dice is computed per foreground class (label > 0) and macro-averaged.
A class absent from both masks scores 1, absent from exactly one scores 0.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from medpatch.errors import ConfigError, DimensionError

KINDS = ("dice", "mse")


@dataclass
class MetricReport:
    kind: str
    value: float
    per_class: Dict[int, float] = field(default_factory=dict)

    def columns(self) -> Dict[str, float]:
        """Flat mapping for a results CSV row."""
        out = {f"{self.kind}_{label}": score for label, score in sorted(self.per_class.items())}
        out[self.kind] = self.value
        return out


def dice_score(pred: np.ndarray, gt: np.ndarray) -> float:
    """2 |A & B| / (|A| + |B|) of two boolean masks; 1 when both are empty."""
    pred, gt = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    total = int(pred.sum()) + int(gt.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(pred, gt).sum()) / total


def _check_extents(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction extents {pred.shape} differ from ground truth {gt.shape}")


def compute_metric(pred, gt, kind: str, labels: Optional[Sequence[int]] = None) -> MetricReport:
    """
    Compare a prediction with the ground truth.

    Args:
        pred, gt: integral label masks (dice) or values (mse), same extents
        kind: dice|mse
        labels: foreground labels to score; default every label > 0 found in either mask
    """
    pred, gt = np.asarray(pred), np.asarray(gt)
    _check_extents(pred, gt)
    if kind == "dice":
        if labels is None:
            labels = sorted(int(v) for v in np.union1d(np.unique(pred), np.unique(gt)) if v > 0)
        per_class = {int(label): dice_score(pred == label, gt == label) for label in labels}
        # nothing to segment on either side is perfect agreement
        value = float(np.mean(list(per_class.values()))) if per_class else 1.0
        return MetricReport("dice", value, per_class)
    if kind == "mse":
        diff = pred.astype(np.float64) - gt.astype(np.float64)
        return MetricReport("mse", float(np.mean(diff * diff)) if diff.size else 0.0)
    raise ConfigError(f"metric must be one of {KINDS}, got '{kind}'")


def accuracy(pred, gt) -> float:
    pred, gt = np.asarray(pred), np.asarray(gt)
    _check_extents(pred, gt)
    if not pred.size:
        raise DimensionError("accuracy of an empty prediction")
    return float(np.mean(pred == gt))
