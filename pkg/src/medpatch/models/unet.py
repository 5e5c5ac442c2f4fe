"""
UNet, residual UNet and inception UNet.

Encoder: `depth` levels, max-pool between levels, filters doubling from
base_filters. Decoder: stride-2 transpose convolution, concatenation with
the encoder skip of the same level, a block back to that level's width.
Head: 1x1 convolution to `classes`.
"""

from typing import Callable, List

import numpy as np

from medpatch.core import ParamStore, Tensor, ops
from medpatch.decorators import architecture
from medpatch.errors import ConfigError
from medpatch.models.graph import ModelGraph
from medpatch.models.layers import Conv, ConvBlock, InceptionBlock, TransposeConv, max_pool
from medpatch.models.spec import ArchSpec

BlockFactory = Callable[[ParamStore, str, int, int, np.random.Generator], Callable[[Tensor, bool], Tensor]]


def _require_segmentation(spec: ArchSpec) -> None:
    if spec.task != "segmentation":
        raise ConfigError(f"{spec.architecture} is a segmentation network, task '{spec.task}' needs a vgg architecture")


def level_filters(spec: ArchSpec) -> List[int]:
    return [spec.base_filters * 2 ** level for level in range(spec.depth)]


def build_encoder_decoder(spec: ArchSpec, seed: int, make_block: BlockFactory) -> ModelGraph:
    _require_segmentation(spec)
    rng = np.random.default_rng(seed)
    store = ParamStore()
    filters = level_filters(spec)

    encoder = []
    cin = spec.in_channels
    for level, cout in enumerate(filters):
        encoder.append(make_block(store, f"enc{level}", cin, cout, rng))
        cin = cout

    decoder = []
    for level in range(spec.depth - 2, -1, -1):
        up = TransposeConv(store, f"up{level}", spec.dims, filters[level + 1], filters[level], 2, rng, stride=2)
        block = make_block(store, f"dec{level}", 2 * filters[level], filters[level], rng)
        decoder.append((up, block))

    head = Conv(store, "head", spec.dims, filters[0], spec.classes, 1, rng)

    def body(x: Tensor, training: bool) -> Tensor:
        skips = []
        h = x
        for level, block in enumerate(encoder):
            if level > 0:
                h = max_pool(h)
            h = block(h, training)
            skips.append(h)
        for (up, block), skip in zip(decoder, reversed(skips[:-1])):
            h = block(ops.concat([up(h), skip], axis=1), training)
        return head(h)

    return ModelGraph(spec, store, body, spec.final_activation)


def build_unet(spec: ArchSpec, residual: bool = False, seed: int = 0) -> ModelGraph:
    """UNet; residual=True adds the first conv unit's output to each block's output."""
    def make_block(store, name, cin, cout, rng):
        return ConvBlock(store, name, spec.dims, cin, cout, rng, residual=residual)

    return build_encoder_decoder(spec, seed, make_block)


def build_uinc(spec: ArchSpec, seed: int = 0) -> ModelGraph:
    """UNet topology with every block replaced by an inception block."""
    if spec.base_filters < 3:
        raise ConfigError(f"uinc needs base_filters >= 3 to feed its three parallel paths, got {spec.base_filters}")

    def make_block(store, name, cin, cout, rng):
        return InceptionBlock(store, name, spec.dims, cin, cout, rng)

    return build_encoder_decoder(spec, seed, make_block)


@architecture("unet")
def unet(spec: ArchSpec, seed: int = 0) -> ModelGraph:
    return build_unet(spec, residual=False, seed=seed)


@architecture("resunet")
def resunet(spec: ArchSpec, seed: int = 0) -> ModelGraph:
    return build_unet(spec, residual=True, seed=seed)


@architecture("uinc")
def uinc(spec: ArchSpec, seed: int = 0) -> ModelGraph:
    return build_uinc(spec, seed=seed)


for _builder in (unet, resunet, uinc):
    _builder.tasks = ("segmentation",)
