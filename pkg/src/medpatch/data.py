"""
Subject loading: manifest record -> preprocessed arrays ready for sampling.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from medpatch.errors import DimensionError, ValidationError
from medpatch.imaging.image import Image, ImageGeometry
from medpatch.imaging.io import read_image
from medpatch.imaging.manifest import SubjectRecord
from medpatch.preprocess import GridRecord, Step, apply_pipeline
from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)


@dataclass
class SubjectData:
    """
    A subject after preprocessing.

    image: (C, *S) float64; mask: (*S) class indices, or None;
    target: class index (classification) or value (regression), or None;
    grid_records: the crops and resamples applied, in order.
    """

    subject_id: str
    image: np.ndarray
    geometry: ImageGeometry
    mask: Optional[np.ndarray] = None
    target: Optional[float] = None
    grid_records: List[GridRecord] = field(default_factory=list)
    original_geometry: Optional[ImageGeometry] = None
    original_extents: Tuple[int, ...] = ()

    @property
    def extents(self) -> Tuple[int, ...]:
        return tuple(self.image.shape[1:])


def labels_to_indices(labels: np.ndarray, class_list: Sequence[float]) -> np.ndarray:
    """Map raw label values onto their position in class_list."""
    out = np.zeros(labels.shape, dtype=np.int64)
    known = np.zeros(labels.shape, dtype=bool)
    for index, value in enumerate(class_list):
        hit = labels == value
        out[hit] = index
        known |= hit
    if not known.all():
        raise ValidationError(f"label values not in class_list {list(class_list)}",
                              sorted(np.unique(labels[~known]).tolist()))
    return out


def read_channels(record: SubjectRecord) -> Result[Image]:
    images = []
    for path in record.channel_paths:
        res = read_image(path)
        if not res:
            return Result.error(f"subject {record.subject_id}: could not read channel", res)
        images.append(res.unwrapped)
    extents = {img.extents for img in images}
    if len(extents) != 1:
        return Result.error(f"subject {record.subject_id}",
                            DimensionError(f"channel files have different extents: {sorted(extents)}"))
    values = np.concatenate([img.values.astype(np.float64) for img in images], axis=0)
    return Ok(Image(values, images[0].geometry))


def load_subject(record: SubjectRecord, steps: Sequence[Step], task: str, class_list: Sequence[float],
                 with_target: bool = True) -> Result[SubjectData]:
    res = read_channels(record)
    if not res:
        return res
    image = res.unwrapped
    original_geometry, original_extents = image.geometry, image.extents

    mask_image = None
    if with_target and record.mask_path is not None:
        res = read_image(record.mask_path)
        if not res:
            return Result.error(f"subject {record.subject_id}: could not read label mask", res)
        mask_image = res.unwrapped
        if mask_image.extents != image.extents:
            return Result.error(f"subject {record.subject_id}", DimensionError(
                f"mask extents {mask_image.extents} differ from image extents {image.extents}"))
        mask_image = mask_image.with_values(mask_image.values[:1])

    try:
        image, mask_image, grid_records = apply_pipeline(steps, image, mask_image)
        mask = labels_to_indices(mask_image.values[0], class_list) if mask_image is not None else None
        target = None
        if with_target and record.value is not None:
            target = (float(labels_to_indices(np.array(record.value), class_list))
                      if task == "classification" else float(record.value))
    except Exception as e:
        return Result.error(f"subject {record.subject_id}: preprocessing failed", e)

    return Ok(SubjectData(record.subject_id, image.values.astype(np.float64), image.geometry, mask, target, grid_records,
                          original_geometry, original_extents))


def load_subjects(records: Sequence[SubjectRecord], steps: Sequence[Step], task: str,
                  class_list: Sequence[float], with_target: bool = True) -> Result[List[SubjectData]]:
    subjects = []
    for record in records:
        res = load_subject(record, steps, task, class_list, with_target)
        if not res:
            return res
        subjects.append(res.unwrapped)
    logger.info("loaded %d subjects", len(subjects))
    return Ok(subjects)
