"""
Fully convolutional network: the UNet encoder without decoder blocks.

Each encoder level is projected to base_filters channels by a 1x1
convolution, upsampled (nearest) back to input resolution, concatenated,
and classified by a final 1x1 convolution.
"""

import numpy as np

from medpatch.core import ParamStore, Tensor, ops
from medpatch.decorators import architecture
from medpatch.models.graph import ModelGraph
from medpatch.models.layers import Conv, ConvBlock, max_pool
from medpatch.models.spec import ArchSpec
from medpatch.models.unet import _require_segmentation, level_filters


def build_fcn(spec: ArchSpec, seed: int = 0) -> ModelGraph:
    _require_segmentation(spec)
    rng = np.random.default_rng(seed)
    store = ParamStore()
    filters = level_filters(spec)

    encoder = []
    projections = []
    cin = spec.in_channels
    for level, cout in enumerate(filters):
        encoder.append(ConvBlock(store, f"enc{level}", spec.dims, cin, cout, rng))
        projections.append(Conv(store, f"proj{level}", spec.dims, cout, spec.base_filters, 1, rng))
        cin = cout
    head = Conv(store, "head", spec.dims, spec.base_filters * spec.depth, spec.classes, 1, rng)

    def body(x: Tensor, training: bool) -> Tensor:
        fused = []
        h = x
        for level, (block, proj) in enumerate(zip(encoder, projections)):
            if level > 0:
                h = max_pool(h)
            h = block(h, training)
            p = proj(h)
            if level > 0:
                p = ops.upsample_nearest(p, (2 ** level,) * spec.dims)
            fused.append(p)
        return head(ops.concat(fused, axis=1))

    return ModelGraph(spec, store, body, spec.final_activation)


@architecture("fcn")
def fcn(spec: ArchSpec, seed: int = 0) -> ModelGraph:
    return build_fcn(spec, seed=seed)


fcn.tasks = ("segmentation",)
