"""Executable networks instantiated from an :class:`ArchSpec`."""

from collections import OrderedDict

import numpy as np

from .. import ops
from ..blocks import make_block
from ..layers import BatchNorm2d, Conv2d, Linear, Module
from ..tensor import ShapeError, Tensor


class InputSizeError(ShapeError):
    pass


class StemStage(Module):
    def __init__(self, c_in, c_out, rng, dtype, bn_mode):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, 7, stride=2, padding=3, rng=rng, dtype=dtype)
        self.bn = BatchNorm2d(c_out, bn_mode, dtype)

    def __call__(self, x):
        return ops.relu(self.bn(self.conv(x)))


class BlockStage(Module):
    def __init__(self, stage, rng, dtype, bn_mode):
        super().__init__()
        self.pool = stage.entry == "pool"
        self.block = [make_block(b, rng=rng, dtype=dtype, bn_mode=bn_mode) for b in stage.blocks]

    def __call__(self, x):
        if self.pool:
            x = ops.max_pool(x, 3, 2, 1)
        for blk in self.block:
            x = blk(x)
        return x


class Network(Module):
    """A backbone plus an optional pooled linear classifier."""

    def __init__(self, spec, n_classes=1000, seed=0, dtype=np.float32, bn_mode="training"):
        super().__init__()
        spec.validate()
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "n_classes", n_classes)
        rng = np.random.default_rng(seed)
        names = []
        for st in spec.stages:
            if st.entry == "stem":
                mod = StemStage(spec.in_channels, spec.stem_channels, rng, dtype, bn_mode)
            else:
                mod = BlockStage(st, rng, dtype, bn_mode)
            setattr(self, st.name, mod)
            names.append(st.name)
        object.__setattr__(self, "stage_names", names)
        if spec.head:
            self.fc = Linear(spec.out_channels, n_classes, rng=rng, dtype=dtype)
        self.assign_names()

    @property
    def min_stride(self):
        return self.spec.stages[-1].stride_out

    def _check_input(self, x):
        if x.data.ndim != 4 or x.shape[1] != self.spec.in_channels:
            raise ShapeError(f"expected (n, {self.spec.in_channels}, h, w) input, got {x.shape}", dim="c")
        s = self.min_stride
        for dim, size in zip("hw", x.shape[2:]):
            if size < s or size % s:
                raise InputSizeError(
                    f"input {dim}={size} must be a positive multiple of the network stride {s}", dim=dim
                )

    def features(self, x):
        """Run the backbone; returns every stage output keyed by stage name."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        self._check_input(x)
        out = OrderedDict()
        for name in self.stage_names:
            x = getattr(self, name)(x)
            out[name] = x
        return out

    def __call__(self, x):
        return forward_classifier(self, x)


def build_network(spec, n_classes=1000, seed=0, dtype=np.float32, bn_mode="training"):
    """Instantiate ``spec`` with He-normal convs (fan-in), identity batch norm
    and a zero-bias linear head.  Same seed, same parameters, bit for bit."""
    return Network(spec, n_classes=n_classes, seed=seed, dtype=dtype, bn_mode=bn_mode)


def forward_classifier(net, batch):
    if not net.spec.head:
        raise ValueError(f"{net.spec.name} has no classification head")
    feats = net.features(batch)
    x = ops.flatten(ops.global_avg_pool(next(reversed(feats.values()))))
    return net.fc(x)


def backbone_features(net, batch):
    """Stage outputs from stage2 to the last stage (the stem is dropped)."""
    feats = net.features(batch)
    feats.pop(net.stage_names[0])
    return feats
