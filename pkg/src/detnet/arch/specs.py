"""Declarative architecture specs for the ResNet and DetNet families.

Stage layout follows the usual ResNet numbering: ``stage1`` is the 7x7
stride-2 stem, ``stage2`` opens with the 3x3 stride-2 max pool, and every
later stage is a run of bottlenecks.  DetNet keeps stages 1-4 of ResNet-50
and replaces stage 5 with two stages that stay at 16x.
"""

from dataclasses import dataclass, replace
from typing import Optional, Tuple

from ..blocks import BlockKind, BlockSpec

ENTRIES = ("stem", "pool", "block")


class ArchSpecError(ValueError):
    pass


@dataclass(frozen=True)
class StageSpec:
    name: str
    entry: str
    blocks: Tuple[BlockSpec, ...]
    stride_in: int

    @property
    def entry_stride(self):
        return 2 if self.entry in ("stem", "pool") else 1

    @property
    def stride_out(self):
        s = self.stride_in * self.entry_stride
        for b in self.blocks:
            s *= b.stride
        return s


@dataclass(frozen=True)
class ArchSpec:
    name: str
    stages: Tuple[StageSpec, ...]
    head: bool = True
    in_channels: int = 3
    stem_channels: int = 64
    depth: Optional[int] = None

    @property
    def computed_depth(self):
        n_blocks = sum(len(s.blocks) for s in self.stages)
        return 1 + 3 * n_blocks + (1 if self.head else 0)

    def stage(self, name):
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def stage_channels(self):
        """Output channel count of every stage, keyed by stage name."""
        out, c = {}, self.in_channels
        for s in self.stages:
            if s.entry == "stem":
                c = self.stem_channels
            for b in s.blocks:
                c = b.c_out
            out[s.name] = c
        return out

    @property
    def out_channels(self):
        return self.stage_channels()[self.stages[-1].name]

    def validate(self):
        if not self.stages:
            raise ArchSpecError(f"{self.name}: no stages")
        first = self.stages[0]
        if first.entry != "stem" or first.blocks or first.stride_in != 1:
            raise ArchSpecError(f"{self.name}: first stage must be a block-free stem with stride_in=1")
        stride, c = 1, self.in_channels
        for s in self.stages:
            if s.entry not in ENTRIES:
                raise ArchSpecError(f"{self.name}/{s.name}: unknown entry {s.entry!r}")
            if s.entry == "stem" and s is not first:
                raise ArchSpecError(f"{self.name}/{s.name}: only the first stage may be a stem")
            if s.stride_in != stride:
                raise ArchSpecError(
                    f"{self.name}/{s.name}: stride_in={s.stride_in} but the previous stage ends at stride {stride}"
                )
            if s.entry == "stem":
                c = self.stem_channels
            if s.entry != "stem" and not s.blocks:
                raise ArchSpecError(f"{self.name}/{s.name}: stage has no blocks")
            for i, b in enumerate(s.blocks):
                b.validate()
                if b.c_in != c:
                    raise ArchSpecError(f"{self.name}/{s.name}/block{i}: c_in={b.c_in} but incoming width is {c}")
                c = b.c_out
            stride = s.stride_out
        if self.depth is not None and self.depth != self.computed_depth:
            raise ArchSpecError(
                f"{self.name}: declared depth {self.depth} but blocks give {self.computed_depth}"
            )
        return self


def _stage(name, stride_in, c_in, c_mid, c_out, count, stride=1, dilation=1,
           first_kind=BlockKind.C, entry="block", stride_at="1x1"):
    blocks = [BlockSpec(first_kind, c_in, c_mid, c_out, stride, dilation, stride_at)]
    blocks += [BlockSpec(BlockKind.A, c_out, c_mid, c_out, 1, dilation) for _ in range(count - 1)]
    return StageSpec(name, entry, tuple(blocks), stride_in)


def _resnet_stages(counts, stride_on_3x3=False):
    at = "3x3" if stride_on_3x3 else "1x1"
    return (
        StageSpec("stage1", "stem", (), 1),
        _stage("stage2", 2, 64, 64, 256, counts[0], entry="pool", stride_at=at),
        _stage("stage3", 4, 256, 128, 512, counts[1], stride=2, stride_at=at),
        _stage("stage4", 8, 512, 256, 1024, counts[2], stride=2, stride_at=at),
        _stage("stage5", 16, 1024, 512, 2048, counts[3], stride=2, stride_at=at),
    )


def resnet50_spec(stride_on_3x3=False):
    return ArchSpec("resnet50", _resnet_stages((3, 4, 6, 3), stride_on_3x3), depth=50).validate()


def resnet101_spec(stride_on_3x3=False):
    return ArchSpec("resnet101", _resnet_stages((3, 4, 23, 3), stride_on_3x3), depth=101).validate()


def resnet50_dilated_spec():
    """ResNet-50 with stage 5 kept at 16x and its 3x3 convs dilated by 2.

    The stage-5 entry still needs a projection (1024 -> 2048), and with a
    dilated 3x3 that is a kind-B block.
    """
    stages = _resnet_stages((3, 4, 6, 3))[:4]
    stage5 = _stage("stage5", 16, 1024, 512, 2048, 3, stride=1, dilation=2, first_kind=BlockKind.B)
    return ArchSpec("resnet50_dilated", stages + (stage5,), depth=50).validate()


def detnet59_spec(extra_mid=256, extra_out=1024, dilation=2):
    """DetNet-59: ResNet-50 stages 1-4, then stages 5 and 6 at fixed 16x,
    each opened by a projection block (kind B) followed by two kind-A blocks.

    ``extra_mid``/``extra_out`` set the stage-5/6 bottleneck widths.
    """
    stages = _resnet_stages((3, 4, 6, 3))[:4]
    c = 1024
    stage5 = _stage("stage5", 16, c, extra_mid, extra_out, 3, dilation=dilation, first_kind=BlockKind.B)
    stage6 = _stage("stage6", 16, extra_out, extra_mid, extra_out, 3, dilation=dilation, first_kind=BlockKind.B)
    return ArchSpec("detnet59", stages + (stage5, stage6), depth=59).validate()


def detnet59_noproj_spec():
    """DetNet-59 with the stage-6 projection shortcut replaced by identity."""
    spec = detnet59_spec()
    s6 = spec.stage("stage6")
    first = replace(s6.blocks[0], kind=BlockKind.A)
    s6 = replace(s6, blocks=(first,) + s6.blocks[1:])
    stages = tuple(s6 if s.name == "stage6" else s for s in spec.stages)
    return replace(spec, name="detnet59_noproj", stages=stages).validate()


def scale_width(spec, divisor, name=None):
    """Divide every channel count (stem included) by ``divisor``."""
    if divisor == 1:
        return spec

    def div(c):
        if c % divisor:
            raise ArchSpecError(f"channel count {c} not divisible by {divisor}")
        return c // divisor

    stages = tuple(
        replace(s, blocks=tuple(replace(b, c_in=div(b.c_in), c_mid=div(b.c_mid), c_out=div(b.c_out)) for b in s.blocks))
        for s in spec.stages
    )
    return replace(
        spec, name=name or f"{spec.name}_w{divisor}", stages=stages,
        stem_channels=div(spec.stem_channels),
    ).validate()


BUILTIN = {
    "resnet50": resnet50_spec,
    "resnet101": resnet101_spec,
    "resnet50_dilated": resnet50_dilated_spec,
    "detnet59": detnet59_spec,
    "detnet59_noproj": detnet59_noproj_spec,
}


def get_spec(name):
    try:
        return BUILTIN[name]()
    except KeyError:
        raise KeyError(f"unknown architecture {name!r}; choose from {', '.join(BUILTIN)}") from None
