"""
Augmentation preview: one subject, each configured augmentation applied
alone, then the composed plan. Writes <output>/preview/<name>.mha per
panel and a preview.png grid.
"""

import logging
from pathlib import Path
from typing import Optional

import numpy as np

from medpatch.augment.plan import AugmentationPlan, Sample, apply_entry, compose
from medpatch.data import load_subject
from medpatch.imaging.image import Image
from medpatch.imaging.io import write_image
from medpatch.imaging.manifest import read_manifest
from medpatch.plots import plot_preview
from medpatch.preprocess import parse_steps
from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)

PREVIEW_DIR = "preview"
FIGURE_NAME = "preview.png"


def preview_augmentations(manifest, config, output, subject_id: Optional[str] = None,
                          plugins_path: Optional[str] = None) -> Result[Path]:
    res = read_manifest(manifest, config.task, require_label=False)
    if not res:
        return res
    records = res.unwrapped
    if subject_id is None:
        record = records[0]
    else:
        matching = [r for r in records if r.subject_id == subject_id]
        if not matching:
            return Result.error(f"subject '{subject_id}' is not in {manifest}")
        record = matching[0]

    res = parse_steps(config.data_preprocessing, plugins_path)
    if not res:
        return Result.error("invalid data_preprocessing", res)
    res = load_subject(record, res.unwrapped, config.task, config.model.class_list)
    if not res:
        return res
    subject = res.unwrapped
    res = AugmentationPlan.from_config(config.data_augmentation, plugins_path)
    if not res:
        return Result.error("invalid data_augmentation", res)
    plan = res.unwrapped
    if not plan.entries:
        logger.warning("data_augmentation is empty, the preview shows the input only")

    sample = Sample(subject.image, subject.mask)
    panels = [("input", sample)]
    for index, entry in enumerate(plan.entries):
        panels.append((entry.kind, apply_entry(entry, sample, np.random.default_rng([config.seed, index]))))
    if plan.entries:
        panels.append(("composed", compose(plan, sample, np.random.default_rng(config.seed))))

    directory = Path(output) / PREVIEW_DIR
    for name, shown in panels:
        res = write_image(Image(shown.image, subject.geometry), directory / f"{name}.mha")
        if not res:
            return res
    res = plot_preview([(name, shown.image) for name, shown in panels], directory / FIGURE_NAME)
    if not res:
        return res
    logger.info("preview of subject %s with %d augmentation(s) in %s", record.subject_id, len(plan.entries),
                directory)
    return Ok(directory)
