from typing import Callable, Optional

import numpy as np

from medpatch.core import ParamStore, Tensor, no_tape
from medpatch.core.nn import activation
from medpatch.errors import ConfigError, DimensionError
from medpatch.models.spec import ArchSpec
from medpatch.registry import lookup
from medpatch.result import Ok, Result

Body = Callable[[Tensor, bool], Tensor]


class ModelGraph:
    """
    A built network: its ArchSpec, the ParamStore holding every weight, and
    the body function computing pre-activation outputs.

    forward() on [B, in_channels, S...] returns [B, classes, S...] for
    segmentation and [B, classes] otherwise. While a Tape is active the
    forward pass is recorded on it.
    """

    def __init__(self, spec: ArchSpec, params: ParamStore, body: Body, final_activation: str):
        self.spec = spec
        self.params = params
        self._body = body
        self.final_activation = final_activation

    @property
    def task(self) -> str:
        return self.spec.task

    def forward(self, batch, training: bool = False) -> Tensor:
        x = batch if isinstance(batch, Tensor) else Tensor(batch)
        if x.ndim != self.spec.dims + 2:
            raise DimensionError(
                f"{self.spec.architecture}: expected input [B, C, {self.spec.dims} spatial axes], got shape {x.shape}")
        if x.shape[1] != self.spec.in_channels:
            raise DimensionError(
                f"{self.spec.architecture}: axis 1 (channels) is {x.shape[1]}, model expects {self.spec.in_channels}")
        self.spec.check_input_extents(x.shape[2:])
        return activation(self._body(x, training), self.final_activation, axis=1)

    def predict(self, batch: np.ndarray) -> np.ndarray:
        """Evaluation-mode forward without recording."""
        with no_tape():
            return self.forward(batch, training=False).data

    def num_parameters(self) -> int:
        return self.params.num_parameters()


def build_model(spec: ArchSpec, seed: int = 0, plugins_path: Optional[str] = None) -> Result[ModelGraph]:
    """Build the registered architecture named by spec.architecture."""
    res = lookup("architecture", spec.architecture, plugins_path)
    if not res:
        return Result.error(f"cannot build model '{spec.architecture}'", res)
    builder = res.unwrapped
    try:
        return Ok(builder(spec, seed))
    except (ConfigError, DimensionError) as e:
        return Result.error(f"invalid architecture specification for '{spec.architecture}'", e)
