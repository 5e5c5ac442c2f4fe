"""
Subject manifest: the CSV entry point of training and inference.

    SubjectID,Channel_0,...,Channel_{N-1},Label

Label is a mask path for segmentation and a number for regression and
classification. It may be omitted (column absent or cell empty) when the
manifest is only used for inference.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

from medpatch.errors import ParseError, ValidationError
from medpatch.result import Ok, Result

logger = logging.getLogger(__name__)

ID_COLUMN = "SubjectID"
CHANNEL_PREFIX = "Channel_"
LABEL_COLUMN = "Label"


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    channel_paths: Tuple[Path, ...]
    mask_path: Optional[Path] = None
    value: Optional[float] = None

    @property
    def has_target(self) -> bool:
        return self.mask_path is not None or self.value is not None


def _resolve(cell: str, base: Path) -> Path:
    """Relative paths are tried against the working directory, then the manifest's directory."""
    path = Path(cell)
    if path.is_absolute() or path.exists():
        return path
    candidate = base / path
    return candidate if candidate.exists() else path


def _channel_columns(header: List[str], line: int) -> List[int]:
    indices = {}
    for col, name in enumerate(header):
        if name.startswith(CHANNEL_PREFIX):
            suffix = name[len(CHANNEL_PREFIX):]
            if not suffix.isdigit():
                raise ParseError(f"column '{name}' is not of the form {CHANNEL_PREFIX}<k>", line=line)
            indices[int(suffix)] = col
    if not indices:
        raise ParseError(f"header has no {CHANNEL_PREFIX}0 column", line=line)
    if sorted(indices) != list(range(len(indices))):
        raise ParseError(f"channel columns must be numbered 0..{len(indices) - 1}, got {sorted(indices)}", line=line)
    return [indices[k] for k in range(len(indices))]


def parse_manifest(text: str, task: str, base: Path, require_label: bool = True) -> List[SubjectRecord]:
    rows = list(csv.reader(text.splitlines()))
    while rows and not any(cell.strip() for cell in rows[-1]):
        rows.pop()
    if not rows:
        raise ParseError("manifest is empty", line=1)

    header = [cell.strip() for cell in rows[0]]
    if ID_COLUMN not in header:
        raise ParseError(f"header has no {ID_COLUMN} column", line=1)
    id_col = header.index(ID_COLUMN)
    channel_cols = _channel_columns(header, 1)
    label_col = header.index(LABEL_COLUMN) if LABEL_COLUMN in header else None
    if label_col is None and require_label:
        raise ParseError(f"header has no {LABEL_COLUMN} column", line=1)

    records = []
    for line, row in enumerate(rows[1:], start=2):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row has {len(row)} cells, header has {len(header)}", line=line)
        cells = [cell.strip() for cell in row]
        present = [k for k, col in enumerate(channel_cols) if cells[col]]
        if len(present) != len(channel_cols):
            raise ParseError(
                f"subject '{cells[id_col]}' has {len(present)} channel(s), the manifest declares {len(channel_cols)}",
                line=line)
        channels = tuple(_resolve(cells[col], base) for col in channel_cols)

        mask_path, value = None, None
        label = cells[label_col] if label_col is not None else ""
        if label:
            if task == "segmentation":
                mask_path = _resolve(label, base)
            else:
                try:
                    value = float(label)
                except ValueError as e:
                    raise ParseError(f"Label '{label}' is not a number, required for task {task}", line=line) from e
        elif require_label:
            raise ParseError(f"subject '{cells[id_col]}' has no Label", line=line)
        records.append(SubjectRecord(cells[id_col], channels, mask_path, value))

    seen, duplicates = set(), []
    for record in records:
        if record.subject_id in seen and record.subject_id not in duplicates:
            duplicates.append(record.subject_id)
        seen.add(record.subject_id)
    if duplicates:
        raise ValidationError("duplicate SubjectID", duplicates)
    return records


def missing_files(records: List[SubjectRecord]) -> List[Path]:
    missing = []
    for record in records:
        paths = list(record.channel_paths) + ([record.mask_path] if record.mask_path is not None else [])
        missing.extend(p for p in paths if not p.exists())
    return missing


def read_manifest(path, task: str, require_label: bool = True) -> Result[List[SubjectRecord]]:
    """Parse and validate a manifest; every missing file is reported, not only the first."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
        records = parse_manifest(text, task, path.parent, require_label)
        missing = missing_files(records)
        if missing:
            raise ValidationError("files listed in the manifest do not exist", missing)
    except (OSError, ParseError, ValidationError) as e:
        return Result.error(f"invalid manifest {path}", e)
    logger.info("manifest %s: %d subjects, %d channel(s)", path, len(records),
                len(records[0].channel_paths) if records else 0)
    return Ok(records)
