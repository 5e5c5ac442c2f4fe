from dataclasses import asdict, dataclass, fields
from typing import Sequence

from medpatch.errors import ConfigError

TASKS = ("segmentation", "regression", "classification")
FINAL_ACTIVATIONS = ("softmax", "sigmoid", "none")
VGG_ARCHITECTURES = ("vgg11", "vgg13", "vgg16", "vgg19")


@dataclass(frozen=True)
class ArchSpec:
    """Architecture specification, as found under the `model` section of a configuration."""

    architecture: str
    dims: int = 2
    in_channels: int = 1
    classes: int = 2
    base_filters: int = 8
    depth: int = 3
    final_activation: str = "softmax"
    batch_norm: bool = False
    task: str = "segmentation"

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ConfigError(f"model.dims must be 2 or 3, got {self.dims}")
        if self.in_channels < 1:
            raise ConfigError(f"model in_channels must be >= 1, got {self.in_channels}")
        if self.classes < 1:
            raise ConfigError(f"model classes must be >= 1, got {self.classes}")
        if self.base_filters < 1:
            raise ConfigError(f"model.base_filters must be >= 1, got {self.base_filters}")
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got '{self.task}'")
        if self.final_activation not in FINAL_ACTIVATIONS:
            raise ConfigError(f"model.final_activation must be one of {FINAL_ACTIVATIONS}, got '{self.final_activation}'")
        if not self.is_vgg and self.depth < 2:
            raise ConfigError(f"model.depth must be >= 2 for encoder-decoder networks, got {self.depth}")

    @property
    def is_vgg(self) -> bool:
        return self.architecture in VGG_ARCHITECTURES

    @property
    def input_divisor(self) -> int:
        """Every spatial input extent must be a multiple of this."""
        return 32 if self.is_vgg else 2 ** (self.depth - 1)

    def check_input_extents(self, extents: Sequence[int]) -> None:
        if len(extents) != self.dims:
            raise ConfigError(f"{self.architecture}: {len(extents)} spatial extents given for a {self.dims}D model")
        bad = [e for e in extents if e % self.input_divisor]
        if bad:
            raise ConfigError(
                f"{self.architecture} with depth {self.depth} needs every spatial extent divisible by "
                f"{self.input_divisor}, got {tuple(extents)}")

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ArchSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown architecture fields: {unknown}")
        return cls(**data)
