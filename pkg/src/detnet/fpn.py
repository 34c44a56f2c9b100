"""Feature pyramid over any backbone spec.

Laterals are 1x1 convs (with bias) from stage2..last to ``fpn_channels``.
The top-down pathway adds each lateral to the merged map one level deeper,
upsampled 2x when the strides differ and added as-is when they are equal
(the DetNet case for stages 4-6).  A 3x3 conv on each merged map gives
``P_k``.  Five-stage backbones get ``P6`` by stride-2 subsampling of ``P5``.
"""

from collections import OrderedDict
from dataclasses import replace

import numpy as np

from . import ops
from .arch import Network
from .layers import Conv2d, Module
from .tensor import ShapeError, Tensor


class FpnNetwork(Module):
    def __init__(self, backbone_spec, fpn_channels=256, seed=0, dtype=np.float32, bn_mode="frozen"):
        super().__init__()
        stages = backbone_spec.stages[1:]
        if len(stages) < 4:
            raise ValueError(f"{backbone_spec.name}: FPN needs at least 4 stages after the stem")
        self.backbone = Network(_headless(backbone_spec), seed=seed, dtype=dtype, bn_mode=bn_mode)
        object.__setattr__(self, "fpn_channels", fpn_channels)
        rng = np.random.default_rng([seed, 0xF9])
        widths = backbone_spec.stage_channels()
        strides = {st.name: st.stride_out for st in stages}
        names = [st.name for st in stages]
        levels = [f"P{name[len('stage'):]}" for name in names]
        self.lateral = [Conv2d(widths[n], fpn_channels, 1, bias=True, rng=rng, dtype=dtype) for n in names]
        self.output = [Conv2d(fpn_channels, fpn_channels, 3, padding=1, bias=True, rng=rng, dtype=dtype)
                       for _ in names]
        # merge rule between level i and the deeper level i+1
        merges = []
        for shallow, deep in zip(names[:-1], names[1:]):
            ratio = strides[deep] // strides[shallow]
            if ratio == 1:
                merges.append("identity")
            elif ratio == 2:
                merges.append("upsample2x")
            else:
                raise ShapeError(f"{deep} is {ratio}x coarser than {shallow}; only 1x or 2x merges exist")
        object.__setattr__(self, "stage_names", names)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "merges", OrderedDict(zip(levels[:-1], merges)))
        object.__setattr__(self, "extra_p6", len(names) == 4)
        self.assign_names()

    @property
    def level_names(self):
        return self.levels + (["P6"] if self.extra_p6 else [])

    def laterals(self, feats):
        return [lat(feats[n]) for lat, n in zip(self.lateral, self.stage_names)]

    def __call__(self, batch):
        return fpn_forward(self, batch)


def _headless(spec):
    if not spec.head:
        return spec
    depth = None if spec.depth is None else spec.depth - 1
    return replace(spec, head=False, depth=depth)


def build_fpn(backbone, fpn_channels=256, seed=0, dtype=np.float32, bn_mode="frozen"):
    """Pyramid graph over ``backbone`` (an ArchSpec). Backbone BN defaults to frozen."""
    return FpnNetwork(backbone, fpn_channels, seed=seed, dtype=dtype, bn_mode=bn_mode)


def top_down(fpn, laterals):
    """Merged maps, shallow to deep, from lateral outputs (shallow to deep)."""
    merged = [None] * len(laterals)
    merged[-1] = laterals[-1]
    for i in range(len(laterals) - 2, -1, -1):
        deeper = merged[i + 1]
        if fpn.merges[fpn.levels[i]] == "upsample2x":
            deeper = ops.upsample_nearest2x(deeper)
        if deeper.shape != laterals[i].shape:
            raise ShapeError(
                f"{fpn.levels[i]}: lateral {laterals[i].shape} vs top-down {deeper.shape}", dim="h"
            )
        merged[i] = ops.add(laterals[i], deeper)
    return merged


def fpn_forward(fpn, batch):
    """Returns an ordered map P2..P6 -> Tensor, all ``fpn_channels`` wide."""
    batch = batch if isinstance(batch, Tensor) else Tensor(batch)
    feats = fpn.backbone.features(batch)
    merged = top_down(fpn, fpn.laterals(feats))
    out = OrderedDict((lvl, conv(m)) for lvl, conv, m in zip(fpn.levels, fpn.output, merged))
    if fpn.extra_p6:
        out["P6"] = ops.max_pool(out[fpn.levels[-1]], 1, 2, 0)
    return out
