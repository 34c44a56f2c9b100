"""Bottleneck residual blocks.

Three kinds share one main path (1x1 reduce, 3x3 possibly dilated, 1x1
expand, each followed by batch norm) and differ in the shortcut:

* ``A`` - identity shortcut, dilated 3x3 allowed (DetNet body block; with
  dilation 1 it is also the plain ResNet body block).
* ``B`` - dilated 3x3 with a 1x1 projection on the shortcut. Starts a new
  DetNet stage even when the resolution does not change.
* ``C`` - original ResNet transition bottleneck, 1x1 projection, no dilation.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import ops
from .layers import BatchNorm2d, Conv2d, Module


class BlockKind(str, Enum):
    A = "A"
    B = "B"
    C = "C"


class BlockSpecError(ValueError):
    """A BlockSpec breaks one of its invariants; ``rule`` names which."""

    def __init__(self, rule, message):
        super().__init__(f"[{rule}] {message}")
        self.rule = rule


@dataclass(frozen=True)
class BlockSpec:
    kind: BlockKind
    c_in: int
    c_mid: int
    c_out: int
    stride: int = 1
    dilation: int = 1
    # "1x1" puts the transition stride on the first 1x1 conv (original ResNet);
    # "3x3" puts it on the middle conv.
    stride_at: str = "1x1"

    def __post_init__(self):
        object.__setattr__(self, "kind", BlockKind(self.kind))

    @property
    def has_projection(self):
        return self.kind in (BlockKind.B, BlockKind.C)

    def validate(self):
        if min(self.c_in, self.c_mid, self.c_out) < 1:
            raise BlockSpecError("positive-channels", f"channel counts must be positive: {self}")
        if self.stride not in (1, 2):
            raise BlockSpecError("stride-1-or-2", f"stride must be 1 or 2, got {self.stride}")
        if self.dilation < 1:
            raise BlockSpecError("dilation-positive", f"dilation must be >= 1, got {self.dilation}")
        if self.stride_at not in ("1x1", "3x3"):
            raise BlockSpecError("stride-placement", f"stride_at must be '1x1' or '3x3', got {self.stride_at!r}")
        if self.kind is BlockKind.A and (self.c_in != self.c_out or self.stride != 1):
            raise BlockSpecError(
                "identity-shortcut",
                f"kind A needs c_in == c_out and stride 1, got c_in={self.c_in} c_out={self.c_out} stride={self.stride}",
            )
        if self.kind is BlockKind.C and self.dilation != 1:
            raise BlockSpecError("C-undilated", f"kind C must have dilation 1, got {self.dilation}")
        return self


class Bottleneck(Module):
    def __init__(self, spec, rng=None, dtype=np.float32, bn_mode="training"):
        super().__init__()
        spec.validate()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.spec = spec
        s1, s3 = (spec.stride, 1) if spec.stride_at == "1x1" else (1, spec.stride)
        d = spec.dilation
        self.conv1 = Conv2d(spec.c_in, spec.c_mid, 1, stride=s1, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2d(spec.c_mid, bn_mode, dtype)
        self.conv2 = Conv2d(spec.c_mid, spec.c_mid, 3, stride=s3, padding=d, dilation=d, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(spec.c_mid, bn_mode, dtype)
        self.conv3 = Conv2d(spec.c_mid, spec.c_out, 1, rng=rng, dtype=dtype)
        self.bn3 = BatchNorm2d(spec.c_out, bn_mode, dtype)
        if spec.has_projection:
            self.proj = Conv2d(spec.c_in, spec.c_out, 1, stride=spec.stride, rng=rng, dtype=dtype)
            self.proj_bn = BatchNorm2d(spec.c_out, bn_mode, dtype)

    def __call__(self, x):
        return block_forward(self, x)


def make_block(spec, rng=None, dtype=np.float32, bn_mode="training"):
    """Instantiate a bottleneck with freshly initialized parameters."""
    return Bottleneck(spec, rng=rng, dtype=dtype, bn_mode=bn_mode)


def block_forward(block, x):
    spec = block.spec
    if x.shape[1] != spec.c_in:
        raise ops.ShapeError(f"block expects {spec.c_in} input channels, got {x.shape[1]}", dim="c_in")
    h = ops.relu(block.bn1(block.conv1(x)))
    h = ops.relu(block.bn2(block.conv2(h)))
    h = block.bn3(block.conv3(h))
    shortcut = block.proj_bn(block.proj(x)) if spec.has_projection else x
    return ops.relu(ops.add(h, shortcut))
