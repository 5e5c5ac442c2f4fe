"""
Sliding-window inference, cross-fold aggregation, metrics and the inference runner.
"""

from medpatch.inference.stitching import CountMap, PredictionMap, grid_starts, sliding_window_infer
from medpatch.inference.aggregate import Aggregate, aggregate_folds
from medpatch.inference.metrics import MetricReport, accuracy, compute_metric, dice_score
from medpatch.inference.postprocess import fill_holes, largest_component, post_process
from medpatch.inference.runner import InferenceReport, run_inference

__all__ = [
    "CountMap", "PredictionMap", "grid_starts", "sliding_window_infer", "Aggregate", "aggregate_folds",
    "MetricReport", "accuracy", "compute_metric", "dice_score", "fill_holes", "largest_component",
    "post_process", "InferenceReport", "run_inference",
]
