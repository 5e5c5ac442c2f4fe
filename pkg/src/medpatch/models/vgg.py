"""
VGG-11/13/16/19 for regression and classification.

Canonical convolutional stages (3x3 convolutions, 2x2 max-pooling) with
widths scaled by base_filters / 64, then global average pooling and a
three-layer dense head. Classification ends in softmax, regression is linear.
"""

from typing import Dict, List, Union

import numpy as np

from medpatch.core import ParamStore, Tensor, ops
from medpatch.core.nn import activation, pool_nd
from medpatch.decorators import architecture
from medpatch.errors import ConfigError
from medpatch.models.graph import ModelGraph
from medpatch.models.layers import Conv, Dense, Norm, max_pool
from medpatch.models.spec import ArchSpec

POOL = "M"

VGG_LAYOUTS: Dict[str, List[Union[int, str]]] = {
    "vgg11": [64, POOL, 128, POOL, 256, 256, POOL, 512, 512, POOL, 512, 512, POOL],
    "vgg13": [64, 64, POOL, 128, 128, POOL, 256, 256, POOL, 512, 512, POOL, 512, 512, POOL],
    "vgg16": [64, 64, POOL, 128, 128, POOL, 256, 256, 256, POOL, 512, 512, 512, POOL, 512, 512, 512, POOL],
    "vgg19": [64, 64, POOL, 128, 128, POOL, 256, 256, 256, 256, POOL, 512, 512, 512, 512, POOL,
              512, 512, 512, 512, POOL],
}

DENSE_LAYERS = 3


def scaled_width(width: int, base_filters: int) -> int:
    return max(1, width * base_filters // 64)


class _VggConv:
    def __init__(self, store: ParamStore, name: str, dims: int, cin: int, cout: int,
                 rng: np.random.Generator, batch_norm: bool):
        self.conv = Conv(store, f"{name}.conv", dims, cin, cout, 3, rng, bias=not batch_norm)
        self.norm = Norm(store, f"{name}.bn", cout, kind="batch") if batch_norm else None

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        h = self.conv(x)
        if self.norm is not None:
            h = self.norm(h, training)
        return activation(h, "relu")


def build_vgg(spec: ArchSpec, seed: int = 0) -> ModelGraph:
    if spec.architecture not in VGG_LAYOUTS:
        raise ConfigError(f"unknown VGG variant '{spec.architecture}', expected one of {sorted(VGG_LAYOUTS)}")
    if spec.task == "segmentation":
        raise ConfigError(f"{spec.architecture} has no segmentation head; use task regression or classification")

    rng = np.random.default_rng(seed)
    store = ParamStore()
    stages = []
    cin = spec.in_channels
    for index, item in enumerate(VGG_LAYOUTS[spec.architecture]):
        if item == POOL:
            stages.append(None)
            continue
        cout = scaled_width(item, spec.base_filters)
        stages.append(_VggConv(store, f"features{index}", spec.dims, cin, cout, rng, spec.batch_norm))
        cin = cout

    head = [Dense(store, "head0", cin, cin, rng), Dense(store, "head1", cin, cin, rng),
            Dense(store, "head2", cin, spec.classes, rng)]

    def body(x: Tensor, training: bool) -> Tensor:
        h = x
        for stage in stages:
            h = max_pool(h) if stage is None else stage(h, training)
        h = pool_nd(h, "global_average")
        h = ops.reshape(h, (h.shape[0], h.shape[1]))
        h = activation(head[0](h), "relu")
        h = activation(head[1](h), "relu")
        return head[2](h)

    final = "softmax" if spec.task == "classification" else "none"
    return ModelGraph(spec, store, body, final)


def layer_tally(architecture_name: str) -> Dict[str, int]:
    """Weight layers of a variant: canonical VGG-16 has 13 convolutional + 3 dense."""
    convs = sum(1 for item in VGG_LAYOUTS[architecture_name] if item != POOL)
    return {"conv": convs, "dense": DENSE_LAYERS}


def _register(name: str):
    @architecture(name)
    def build(spec: ArchSpec, seed: int = 0) -> ModelGraph:
        return build_vgg(spec, seed=seed)

    build.tasks = ("regression", "classification")
    return build


for _name in VGG_LAYOUTS:
    _register(_name)
