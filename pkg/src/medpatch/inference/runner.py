"""
Inference over a manifest with every fold's best model.

    <models>/outer_*/inner_*/model_best.mpck      inputs
    <output>/predictions/<subject>_pred.mha       segmentation masks
    <output>/predictions/results.csv              one row per subject

Segmentation predictions are mapped back onto the original image grid:
the crops and resamples of the preprocessing are undone in reverse order,
resampling with nearest-neighbour interpolation.
Metrics are computed there, against the label file as given.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from medpatch.data import SubjectData, load_subject
from medpatch.imaging.image import Image
from medpatch.imaging.io import read_image, write_image
from medpatch.imaging.manifest import SubjectRecord, read_manifest
from medpatch.inference.aggregate import aggregate_folds
from medpatch.inference.metrics import accuracy, compute_metric
from medpatch.inference.postprocess import post_process
from medpatch.inference.stitching import sliding_window_infer
from medpatch.models import ModelGraph, load_checkpoint
from medpatch.preprocess import parse_steps, resample, undo_grid_change
from medpatch.result import Ok, Result
from medpatch.sampler import centered_fit

logger = logging.getLogger(__name__)

PREDICTIONS_DIR = "predictions"
RESULTS_NAME = "results.csv"
CHECKPOINT_GLOB = "outer_*/inner_*/model_best.mpck"


@dataclass
class InferenceReport:
    directory: Path
    rows: List[Dict[str, object]] = field(default_factory=list)

    @property
    def results_path(self) -> Path:
        return self.directory / RESULTS_NAME


def find_checkpoints(models_dir) -> List[Path]:
    return sorted(Path(models_dir).glob(CHECKPOINT_GLOB))


def load_fold_models(models_dir, task: str, plugins_path: Optional[str] = None) -> Result[List[ModelGraph]]:
    paths = find_checkpoints(models_dir)
    if not paths:
        return Result.error(f"no trained models ({CHECKPOINT_GLOB}) under {models_dir}")
    models = []
    for path in paths:
        res = load_checkpoint(path, plugins_path)
        if not res:
            return res
        model, _ = res.unwrapped
        if model.task != task:
            return Result.error(f"{path} was trained for task '{model.task}', configuration says '{task}'")
        models.append(model)
    logger.info("loaded %d fold model(s) from %s", len(models), models_dir)
    return Ok(models)


def to_original_grid(labels: np.ndarray, subject: SubjectData) -> Image:
    """Undo the geometric preprocessing of a label map (*S) of the subject."""
    image = Image(labels[np.newaxis].astype(np.float64), subject.geometry)
    for record in reversed(subject.grid_records):
        image = undo_grid_change(image, record)
    if subject.original_extents and image.extents != tuple(subject.original_extents):
        image = resample(image, extents=subject.original_extents, interp="nearest")
    geometry = subject.original_geometry or image.geometry
    return Image(image.values, geometry)


def _label_values(indices: np.ndarray, class_list: Sequence) -> np.ndarray:
    values = np.asarray(class_list)[indices.astype(np.int64)]
    if np.issubdtype(values.dtype, np.integer) and values.size and 0 <= values.min() and values.max() < 256:
        return values.astype(np.uint8)
    return values


class _Predictor:
    def __init__(self, config, models: Sequence[ModelGraph], output: Path):
        self.config = config
        self.models = models
        self.output = output

    def segmentation(self, record: SubjectRecord, subject: SubjectData) -> Result[Dict[str, object]]:
        cfg = self.config
        maps = [sliding_window_infer(model, subject.image, cfg.patch_size, cfg.inference.overlap,
                                     cfg.inference.mode)[0].values for model in self.models]
        labels = post_process(aggregate_folds(maps, "segmentation").prediction, cfg.inference.post_processing)
        grid = to_original_grid(labels, subject)
        prediction = grid.with_values(_label_values(np.rint(grid.values), cfg.model.class_list))
        res = write_image(prediction, self.output / f"{record.subject_id}_pred.mha")
        if not res:
            return res
        row: Dict[str, object] = {"subject_id": record.subject_id}
        if record.mask_path is not None:
            res = read_image(record.mask_path)
            if not res:
                return Result.error(f"subject {record.subject_id}: could not read label mask", res)
            foreground = [v for v in cfg.model.class_list if v > 0]
            report = compute_metric(prediction.values[0], res.unwrapped.values[0], "dice", foreground)
            row.update(report.columns())
        return Ok(row)

    def _outputs(self, subject: SubjectData) -> List[np.ndarray]:
        batch = centered_fit(subject.image, self.config.patch_size)[np.newaxis]
        return [model.predict(batch)[0] for model in self.models]

    def regression(self, record: SubjectRecord, subject: SubjectData) -> Result[Dict[str, object]]:
        value = aggregate_folds(self._outputs(subject), "regression").prediction
        row: Dict[str, object] = {"subject_id": record.subject_id, "prediction": value}
        if record.value is not None:
            row.update(compute_metric(np.array([value]), np.array([float(record.value)]), "mse").columns())
        return Ok(row)

    def classification(self, record: SubjectRecord, subject: SubjectData) -> Result[Dict[str, object]]:
        class_list = self.config.model.class_list
        result = aggregate_folds(self._outputs(subject), "classification")
        row: Dict[str, object] = {"subject_id": record.subject_id, "prediction": class_list[result.prediction]}
        row.update({f"probability_{c}": float(p) for c, p in zip(class_list, result.probabilities)})
        if subject.target is not None:
            target = int(subject.target)
            expected = np.zeros(len(class_list))
            expected[target] = 1.0
            row.update(compute_metric(result.probabilities, expected, "mse").columns())
            row["accuracy"] = accuracy(np.array([result.prediction]), np.array([target]))
        return Ok(row)


def write_results(rows: Sequence[Dict[str, object]], path: Path) -> Result[Path]:
    columns: List[str] = []
    for row in rows:
        columns.extend(k for k in row if k not in columns)
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    except OSError as e:
        return Result.error(f"could not write {path}", e)
    return Ok(path)


def run_inference(manifest, config, models_dir, output, plugins_path: Optional[str] = None
                  ) -> Result[InferenceReport]:
    """Predict every manifest subject with all fold models; ground truth is optional."""
    res = read_manifest(manifest, config.task, require_label=False)
    if not res:
        return res
    records = res.unwrapped
    res = load_fold_models(models_dir, config.task, plugins_path)
    if not res:
        return res
    models = res.unwrapped
    res = parse_steps(config.data_preprocessing, plugins_path)
    if not res:
        return Result.error("invalid data_preprocessing", res)
    steps = res.unwrapped

    directory = Path(output) / PREDICTIONS_DIR
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        return Result.error(f"cannot create {directory}", e)
    predictor = _Predictor(config, models, directory)
    predict = getattr(predictor, config.task)

    report = InferenceReport(directory)
    for record in records:
        res = load_subject(record, steps, config.task, config.model.class_list)
        if not res:
            return res
        try:
            res = predict(record, res.unwrapped)
        except Exception as e:
            return Result.error(f"inference failed for subject {record.subject_id}", e)
        if not res:
            return Result.error(f"inference failed for subject {record.subject_id}", res)
        report.rows.append(res.unwrapped)
        logger.info("subject %s: %s", record.subject_id,
                    {k: v for k, v in res.unwrapped.items() if k != "subject_id"})

    res = write_results(report.rows, report.results_path)
    if not res:
        return res
    return Ok(report)
