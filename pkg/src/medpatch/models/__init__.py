"""
Network architectures built on medpatch.core.

Importing a builder module registers its architectures; use
build_model(spec) to construct one by name.
"""

from medpatch.models.spec import ArchSpec, TASKS, VGG_ARCHITECTURES
from medpatch.models.graph import ModelGraph, build_model
from medpatch.models.unet import build_uinc, build_unet
from medpatch.models.fcn import build_fcn
from medpatch.models.vgg import build_vgg
from medpatch.models.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "ArchSpec", "TASKS", "VGG_ARCHITECTURES", "ModelGraph", "build_model",
    "build_unet", "build_uinc", "build_fcn", "build_vgg", "load_checkpoint", "save_checkpoint",
]
