"""Static analysis of architecture specs: shapes, FLOPs, parameters, depth,
stride and receptive field.  Nothing here touches tensor data.

FLOPs are multiply-adds of conv and linear layers only, at batch size 1.
Parameter counts split trainable values from batch-norm running statistics;
``total`` includes both, matching what a checkpoint stores.
"""

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .ops import conv_output_size
from .tensor import ShapeError


@dataclass
class LayerRecord:
    name: str
    kind: str  # conv | bn | pool | linear
    out_shape: Tuple[int, ...]
    flops: int = 0
    params: int = 0
    buffers: int = 0
    # receptive field / jump after this layer; None off the main path
    rf: Optional[int] = None
    jump: Optional[int] = None

    @property
    def total_params(self):
        return self.params + self.buffers


@dataclass
class StageRecord:
    name: str
    stride: int
    rf: int
    jump: int
    out_shape: Tuple[int, ...]
    flops: int = 0
    params: int = 0
    buffers: int = 0


@dataclass
class AnalysisReport:
    arch: str
    input_hw: Tuple[int, int]
    layers: List[LayerRecord] = field(default_factory=list)
    stages: List[StageRecord] = field(default_factory=list)

    @property
    def flops(self):
        return sum(r.flops for r in self.layers)

    @property
    def params(self):
        return sum(r.params for r in self.layers)

    @property
    def buffers(self):
        return sum(r.buffers for r in self.layers)

    @property
    def total_params(self):
        return self.params + self.buffers

    def layer(self, name):
        for r in self.layers:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_tsv(self):
        lines = [
            f"{r.name}\t{format_shape(r.out_shape)}\t{r.flops}\t{r.total_params}" for r in self.layers
        ]
        lines.append(f"TOTAL\t{self.flops}\t{self.total_params}")
        return "\n".join(lines) + "\n"

    def to_table(self):
        rows = [("layer", "kind", "output", "MACs", "params", "buffers")]
        rows += [(r.name, r.kind, format_shape(r.out_shape), f"{r.flops:,}", f"{r.params:,}", f"{r.buffers:,}")
                 for r in self.layers]
        widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
        fmt = lambda row: "  ".join(  # noqa: E731
            c.ljust(w) if i < 3 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths))
        )
        out = [f"{self.arch} @ {self.input_hw[0]}x{self.input_hw[1]}", fmt(rows[0]),
               "  ".join("-" * w for w in widths)]
        out += [fmt(r) for r in rows[1:]]
        out.append("")
        stage_rows = [("stage", "stride", "rf", "jump", "output", "GMACs", "params")]
        stage_rows += [(s.name, str(s.stride), str(s.rf), str(s.jump), format_shape(s.out_shape),
                        f"{s.flops / 1e9:.3f}", f"{s.params + s.buffers:,}") for s in self.stages]
        sw = [max(len(row[i]) for row in stage_rows) for i in range(len(stage_rows[0]))]
        out += ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, sw)))
                for row in stage_rows]
        out.append("")
        out.append(f"total MACs   {self.flops:,} ({self.flops / 1e9:.2f}G)")
        out.append(f"total params {self.total_params:,} (trainable {self.params:,}, bn stats {self.buffers:,})")
        return "\n".join(out) + "\n"


def format_shape(shape):
    return "x".join(str(d) for d in shape)


def parse_tsv(text):
    """Inverse of :meth:`AnalysisReport.to_tsv`: returns (layers, (flops, params))."""
    layers, totals = [], None
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split("\t")
        if parts[0] == "TOTAL":
            totals = (int(parts[1]), int(parts[2]))
        else:
            name, shape, flops, params = parts
            layers.append((name, tuple(int(d) for d in shape.split("x")), int(flops), int(params)))
    if totals is None:
        raise ValueError("no TOTAL line")
    return layers, totals


class _Walker:
    """Walks a spec layer by layer tracking shape, stride and receptive field."""

    def __init__(self, spec, input_hw, n_classes):
        self.spec = spec
        self.n_classes = n_classes
        self.c = spec.in_channels
        self.h, self.w = input_hw
        self.rf, self.jump = 1, 1
        self.layers = []

    def _advance(self, name, k, stride, padding, dilation=1):
        h = conv_output_size(self.h, k, stride, padding, dilation)
        w = conv_output_size(self.w, k, stride, padding, dilation)
        if h < 1 or w < 1:
            raise ShapeError(f"{name}: spatial size underflows to {h}x{w}", dim="h" if h < 1 else "w")
        self.h, self.w = h, w

    def conv(self, name, c_out, k, stride=1, padding=0, dilation=1, main_path=True):
        c_in, h_in, w_in, rf, jump = self.c, self.h, self.w, self.rf, self.jump
        self._advance(name, k, stride, padding, dilation)
        rec = LayerRecord(name, "conv", (1, c_out, self.h, self.w),
                          flops=self.h * self.w * c_out * c_in * k * k, params=c_out * c_in * k * k)
        self.layers.append(rec)
        if main_path:
            self.c = c_out
            self.rf = rf + (k - 1) * dilation * jump
            self.jump = jump * stride
            rec.rf, rec.jump = self.rf, self.jump
        else:
            self.c, self.h, self.w = c_in, h_in, w_in
        return rec

    def bn(self, name, c, shape):
        self.layers.append(LayerRecord(name, "bn", shape, params=2 * c, buffers=2 * c))

    def pool(self, name, k, stride, padding):
        self._advance(name, k, stride, padding)
        self.rf += (k - 1) * self.jump
        self.jump *= stride
        self.layers.append(LayerRecord(name, "pool", (1, self.c, self.h, self.w), rf=self.rf, jump=self.jump))

    def block(self, prefix, b):
        s1, s3 = (b.stride, 1) if b.stride_at == "1x1" else (1, b.stride)
        c_in, h_in, w_in = self.c, self.h, self.w
        for conv, bn, c, k, s, pad, d in (
            ("conv1", "bn1", b.c_mid, 1, s1, 0, 1),
            ("conv2", "bn2", b.c_mid, 3, s3, b.dilation, b.dilation),
            ("conv3", "bn3", b.c_out, 1, 1, 0, 1),
        ):
            rec = self.conv(f"{prefix}.{conv}", c, k, s, pad, d)
            self.bn(f"{prefix}.{bn}", c, rec.out_shape)
        if b.has_projection:
            out = (self.c, self.h, self.w)
            self.c, self.h, self.w = c_in, h_in, w_in
            rec = self.conv(f"{prefix}.proj", b.c_out, 1, b.stride, main_path=False)
            self.bn(f"{prefix}.proj_bn", b.c_out, rec.out_shape)
            if rec.out_shape[1:] != out:
                raise ShapeError(f"{prefix}: projection shape {rec.out_shape[1:]} != main path {out}", dim="h")
            self.c, self.h, self.w = out

    def run(self):
        stages = []
        for st in self.spec.stages:
            start = len(self.layers)
            if st.entry == "stem":
                rec = self.conv(f"{st.name}.conv", self.spec.stem_channels, 7, 2, 3)
                self.bn(f"{st.name}.bn", self.spec.stem_channels, rec.out_shape)
            elif st.entry == "pool":
                self.pool(f"{st.name}.pool", 3, 2, 1)
            for i, b in enumerate(st.blocks):
                self.block(f"{st.name}.block{i}", b)
            mine = self.layers[start:]
            stages.append(StageRecord(
                st.name, st.stride_out, self.rf, self.jump, (1, self.c, self.h, self.w),
                flops=sum(r.flops for r in mine), params=sum(r.params for r in mine),
                buffers=sum(r.buffers for r in mine),
            ))
        if self.spec.head and self.n_classes:
            d, k = self.c, self.n_classes
            self.layers.append(LayerRecord("fc", "linear", (1, k), flops=d * k, params=d * k + k))
        return stages


def count_flops(spec, input_hw=(224, 224), n_classes=1000):
    """Full per-layer / per-stage report for one input resolution."""
    walker = _Walker(spec, tuple(input_hw), n_classes)
    stages = walker.run()
    return AnalysisReport(spec.name, tuple(input_hw), walker.layers, stages)


analyze = count_flops


@dataclass
class ParamReport:
    trainable: int
    buffers: int
    layers: List[LayerRecord]

    @property
    def total(self):
        return self.trainable + self.buffers


def count_params(spec, n_classes=1000):
    s = spec.stages[-1].stride_out
    rep = count_flops(spec, (s, s), n_classes)
    layers = [r for r in rep.layers if r.params or r.buffers]
    return ParamReport(rep.params, rep.buffers, layers)


def depth(spec):
    """Main-path weighted layers: stem conv, three convs per block, classifier."""
    return spec.computed_depth


def stride_map(spec):
    return tuple(st.stride_out for st in spec.stages)


def receptive_field(spec):
    """Per-stage (rf, jump) along the main path, shortcuts ignored."""
    s = spec.stages[-1].stride_out
    rep = count_flops(spec, (s * 4, s * 4), 0)
    return OrderedDict((st.name, (st.rf, st.jump)) for st in rep.stages)


def shape_inference(spec, input_hw=(224, 224), n_classes=1000):
    """Layer name -> output shape (batch 1), by formula only."""
    rep = count_flops(spec, input_hw, n_classes)
    return OrderedDict((r.name, r.out_shape) for r in rep.layers)


def stage_shapes(spec, input_hw=(224, 224)):
    rep = count_flops(spec, input_hw, 0)
    return OrderedDict((st.name, st.out_shape) for st in rep.stages)


def compare(spec_a, spec_b, input_hw=(224, 224), n_classes=1000):
    """Side-by-side summary of two specs."""
    rows = OrderedDict()
    for key, spec in (("a", spec_a), ("b", spec_b)):
        rep = count_flops(spec, input_hw, n_classes)
        rf = receptive_field(spec)
        rows[key] = {
            "name": spec.name,
            "depth": depth(spec),
            "flops": rep.flops,
            "params": rep.total_params,
            "strides": stride_map(spec),
            "rf": tuple(v[0] for v in rf.values()),
        }
    return rows
