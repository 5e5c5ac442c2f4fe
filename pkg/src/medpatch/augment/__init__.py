"""
Augmentation suite. Importing the group modules registers every kind by name.
"""

from medpatch.augment.plan import (
    AugmentationPlan, PlanEntry, Sample, apply_entry, apply_intensity, apply_kspace, apply_spatial, compose,
)
from medpatch.augment import intensity, kspace, spatial  # noqa: F401  (registration)

__all__ = ["AugmentationPlan", "PlanEntry", "Sample", "apply_entry", "apply_intensity", "apply_kspace", "apply_spatial", "compose"]
