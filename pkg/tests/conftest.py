import csv
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pytest

from medpatch.imaging.image import Image
from medpatch.imaging.io import write_image
from medpatch.training.config import resolve_config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_manifest(path: Path, rows: List[Sequence[str]], channels: int = 1, label: bool = True) -> Path:
    header = ["SubjectID"] + [f"Channel_{k}" for k in range(channels)] + (["Label"] if label else [])
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def square_subject(directory: Path, sid: str, extents=(16, 16), seed: int = 0):
    """Noisy image with a bright square; the square is the label."""
    gen = np.random.default_rng(seed)
    mask = np.zeros(extents, dtype=np.uint8)
    lo = [n // 4 for n in extents]
    hi = [3 * n // 4 for n in extents]
    mask[tuple(slice(a, b) for a, b in zip(lo, hi))] = 1
    values = 0.2 + 0.6 * mask + 0.05 * gen.standard_normal(extents)
    image_path = directory / "images" / f"{sid}.mha"
    mask_path = directory / "labels" / f"{sid}_mask.mha"
    write_image(Image.from_array(values), image_path).expect("image")
    write_image(Image.from_array(mask), mask_path).expect("mask")
    return image_path, mask_path


@pytest.fixture
def segmentation_manifest(tmp_path):
    rows = []
    for index in range(6):
        sid = f"s{index}"
        image_path, mask_path = square_subject(tmp_path, sid, seed=index)
        rows.append((sid, str(image_path.relative_to(tmp_path)), str(mask_path.relative_to(tmp_path))))
    return write_manifest(tmp_path / "manifest.csv", rows)


def base_config(**overrides):
    """A tiny segmentation configuration, resolved and validated like a parsed file."""
    document = {
        "version": {"minimum": "0.1.0", "maximum": "0.1.0"},
        "task": "segmentation",
        "model": {"architecture": "unet", "dims": 2, "base_filters": 4, "depth": 2, "class_list": [0, 1]},
        "patch_size": [8, 8],
        "batch_size": 2,
        "epochs": 1,
        "learning_rate": 0.01,
        "loss": "dice",
        "nested_training": {"testing": 3, "validation": 2},
        "q_samples_per_volume": 2,
        "q_max_length": 8,
        "label_policy": {"type": "uniform"},
        "seed": 0,
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(document.get(key), dict):
            document[key] = {**document[key], **value}
        else:
            document[key] = value
    return resolve_config(document)


@pytest.fixture
def config():
    return base_config()
