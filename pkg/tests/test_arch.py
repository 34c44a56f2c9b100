from dataclasses import replace

import numpy as np
import pytest

from detnet import Tensor, no_grad, ops
from detnet.analyzers import depth, shape_inference, stride_map
from detnet.arch import (
    BUILTIN, ArchSpecError, InputSizeError, SpecParseError, backbone_features, build_network,
    detnet59_noproj_spec, detnet59_spec, forward_classifier, get_spec, parse_arch_spec,
    resnet50_dilated_spec, resnet50_spec, resnet101_spec, scale_width, serialize_arch_spec,
)
from detnet.analyzers import count_params
from detnet.blocks import BlockKind


def test_builtin_names():
    assert set(BUILTIN) == {"resnet50", "resnet101", "resnet50_dilated", "detnet59", "detnet59_noproj"}
    with pytest.raises(KeyError):
        get_spec("vgg16")


@pytest.mark.parametrize("name,expected", [
    ("resnet50", 50), ("resnet101", 101), ("detnet59", 59), ("detnet59_noproj", 59), ("resnet50_dilated", 50),
])
def test_depths(name, expected):
    assert depth(get_spec(name)) == expected


@pytest.mark.parametrize("name,expected", [
    ("resnet50", (2, 4, 8, 16, 32)),
    ("resnet101", (2, 4, 8, 16, 32)),
    ("resnet50_dilated", (2, 4, 8, 16, 16)),
    ("detnet59", (2, 4, 8, 16, 16, 16)),
    ("detnet59_noproj", (2, 4, 8, 16, 16, 16)),
])
def test_stride_maps(name, expected):
    assert stride_map(get_spec(name)) == expected


def test_stage_in_strides():
    det = detnet59_spec()
    assert [s.stride_in for s in det.stages[4:]] == [16, 16]
    assert resnet50_spec().stages[-1].stride_in == 16
    assert resnet50_spec().stages[-1].stride_out == 32


def test_detnet_stages_1_to_4_equal_resnet50():
    assert detnet59_spec().stages[:4] == resnet50_spec().stages[:4]
    assert len(detnet59_spec().stages) == len(resnet50_spec().stages) + 1


def test_detnet_extra_stage_structure():
    det = detnet59_spec()
    for name in ("stage5", "stage6"):
        st = det.stage(name)
        assert [b.kind for b in st.blocks] == [BlockKind.B, BlockKind.A, BlockKind.A]
        for b in st.blocks:
            assert (b.c_in, b.c_mid, b.c_out, b.stride, b.dilation) == (1024, 256, 1024, 1, 2)
    assert det.out_channels == 1024


def test_resnet_layout():
    r50 = resnet50_spec()
    assert [len(s.blocks) for s in r50.stages] == [0, 3, 4, 6, 3]
    assert [len(s.blocks) for s in resnet101_spec().stages] == [0, 3, 4, 23, 3]
    triples = [(s.blocks[0].c_mid, s.blocks[0].c_out) for s in r50.stages[1:]]
    assert triples == [(64, 256), (128, 512), (256, 1024), (512, 2048)]
    for s in r50.stages[2:]:
        first = s.blocks[0]
        assert first.kind is BlockKind.C and first.stride == 2 and first.stride_at == "1x1"


def test_resnet50_dilated_stage5():
    st = resnet50_dilated_spec().stage("stage5")
    assert all(b.stride == 1 and b.dilation == 2 and b.c_mid == 512 and b.c_out == 2048 for b in st.blocks)


def test_noproj_differs_in_one_shortcut():
    a, b = detnet59_spec(), detnet59_noproj_spec()
    diffs = [(s.name, i) for s, t in zip(a.stages, b.stages) for i, (x, y) in enumerate(zip(s.blocks, t.blocks)) if x != y]
    assert diffs == [("stage6", 0)]
    assert a.stage("stage6").blocks[0].kind is BlockKind.B
    assert b.stage("stage6").blocks[0].kind is BlockKind.A
    blk = b.stage("stage6").blocks[0]
    assert blk.c_in == blk.c_out


def test_all_detnet_late_3x3_dilated():
    for name in ("stage5", "stage6"):
        assert all(b.dilation == 2 and b.stride == 1 for b in detnet59_spec().stage(name).blocks)


def test_declared_depth_mismatch_rejected():
    spec = detnet59_spec()
    with pytest.raises(ArchSpecError):
        replace(spec, depth=60).validate()


def test_channel_chain_checked():
    spec = resnet50_spec()
    s3 = spec.stage("stage3")
    bad = replace(s3, blocks=(replace(s3.blocks[0], c_in=128),) + s3.blocks[1:])
    with pytest.raises(ArchSpecError, match="c_in"):
        replace(spec, stages=spec.stages[:2] + (bad,) + spec.stages[3:]).validate()


def test_scale_width():
    toy = scale_width(detnet59_spec(), 16)
    assert toy.name == "detnet59_w16"
    assert toy.stem_channels == 4 and toy.out_channels == 64
    assert stride_map(toy) == stride_map(detnet59_spec())
    with pytest.raises(ArchSpecError):
        scale_width(detnet59_spec(), 3)


# -- built networks ----------------------------------------------------------

def toy(spec):
    return scale_width(spec, 16)


def test_same_seed_same_bits():
    a = build_network(toy(detnet59_spec()), n_classes=10, seed=3)
    b = build_network(toy(detnet59_spec()), n_classes=10, seed=3)
    c = build_network(toy(detnet59_spec()), n_classes=10, seed=4)
    sa, sb, sc = a.state(), b.state(), c.state()
    assert list(sa) == list(sb)
    assert all(sa[k].tobytes() == sb[k].tobytes() for k in sa)
    assert any(sa[k].tobytes() != sc[k].tobytes() for k in sa)


@pytest.mark.parametrize("name", list(BUILTIN))
def test_built_param_count_matches_analyzer(name):
    spec = get_spec(name)
    net = build_network(spec, seed=0)
    rep = count_params(spec)
    assert net.num_parameters(include_buffers=False) == rep.trainable
    assert net.num_parameters() == rep.total


def test_initialisation_convention():
    net = build_network(toy(detnet59_spec()), n_classes=10, seed=0)
    for name, arr in net.state().items():
        if name.endswith(".gamma") or name.endswith("running_var"):
            assert np.all(arr == 1), name
        elif name.endswith(".beta") or name.endswith("running_mean") or name == "fc.bias":
            assert not arr.any(), name
    w = net.stage4.block[0].conv2.weight.data
    fan_in = w.shape[1] * 9
    assert abs(w.std() - np.sqrt(2 / fan_in)) < 0.1 * np.sqrt(2 / fan_in)


def test_zero_input_forward_is_finite():
    net = build_network(detnet59_spec(), seed=0)
    with no_grad():
        out = forward_classifier(net, Tensor(np.zeros((1, 3, 64, 64), dtype=np.float32)))
    assert out.shape == (1, 1000)
    assert np.isfinite(out.data).all()


@pytest.mark.slow
def test_detnet59_full_size_logits():
    net = build_network(detnet59_spec(), seed=0, bn_mode="frozen")
    x = np.random.default_rng(0).standard_normal((2, 3, 224, 224)).astype(np.float32)
    with no_grad():
        assert forward_classifier(net, Tensor(x)).shape == (2, 1000)


def test_resnet_and_detnet_logits_differ():
    x = Tensor(np.random.default_rng(1).standard_normal((1, 3, 64, 64)).astype(np.float32))
    with no_grad():
        a = forward_classifier(build_network(resnet50_spec(), seed=0), x).data
        b = forward_classifier(build_network(detnet59_spec(), seed=0), x).data
    assert a.shape == b.shape == (1, 1000)
    assert not np.allclose(a, b)


def test_backbone_features_toy():
    spec = toy(detnet59_spec())
    net = build_network(spec, n_classes=10)
    with no_grad():
        feats = backbone_features(net, Tensor(np.zeros((1, 3, 64, 64), dtype=np.float32)))
    assert list(feats) == ["stage2", "stage3", "stage4", "stage5", "stage6"]
    widths = spec.stage_channels()
    assert {k: v.shape for k, v in feats.items()} == {
        k: (1, widths[k], 64 // s, 64 // s) for k, s in zip(feats, (4, 8, 16, 16, 16))
    }


@pytest.mark.parametrize("hw", [(60, 64), (64, 8), (0, 64)])
def test_undersized_or_indivisible_input(hw):
    net = build_network(toy(detnet59_spec()), n_classes=10)
    with pytest.raises(InputSizeError):
        forward_classifier(net, Tensor(np.zeros((1, 3) + hw, dtype=np.float32)))


@pytest.mark.parametrize("name", list(BUILTIN))
def test_shape_inference_matches_execution(name):
    spec = get_spec(name)
    net = build_network(spec, seed=0, bn_mode="frozen")
    rng = np.random.default_rng(2)
    for size in (64, 96, 128):
        if size % spec.stages[-1].stride_out:
            continue
        x = Tensor(rng.standard_normal((1, 3, size, size)).astype(np.float32))
        with no_grad(), ops.record_layers() as rec:
            forward_classifier(net, x)
        inferred = shape_inference(spec, (size, size))
        observed = {r["name"]: tuple(r["out_shape"]) for r in rec}
        assert observed == {k: inferred[k] for k in observed}
        assert len(observed) == sum(1 for k in inferred if k.split(".")[-1] in ("conv", "conv1", "conv2", "conv3", "proj", "fc"))


# -- spec file format ----------------------------------------------------------

@pytest.mark.parametrize("name", list(BUILTIN))
def test_specfile_round_trip(name):
    spec = get_spec(name)
    text = serialize_arch_spec(spec)
    assert parse_arch_spec(text) == spec
    assert serialize_arch_spec(parse_arch_spec(text)) == text


def test_specfile_stride_at_round_trip():
    spec = resnet50_spec(stride_on_3x3=True)
    assert parse_arch_spec(serialize_arch_spec(spec)) == spec


def _with_line(text, lineno, new):
    lines = text.splitlines()
    lines[lineno - 1] = new
    return "\n".join(lines) + "\n"


def _first_block_line(text):
    return next(i for i, l in enumerate(text.splitlines(), 1) if l.startswith("block"))


def test_specfile_bad_kind_names_line():
    text = serialize_arch_spec(detnet59_spec())
    n = _first_block_line(text)
    bad = text.splitlines()[n - 1].replace("kind=C", "kind=D")
    with pytest.raises(SpecParseError) as exc:
        parse_arch_spec(_with_line(text, n, bad))
    assert exc.value.line == n
    assert f"line {n}" in str(exc.value)


def test_specfile_unknown_key():
    text = serialize_arch_spec(resnet50_spec())
    n = _first_block_line(text)
    with pytest.raises(SpecParseError, match="unknown key 'groups'"):
        parse_arch_spec(_with_line(text, n, text.splitlines()[n - 1] + " groups=32"))


def test_specfile_depth_mismatch():
    text = serialize_arch_spec(detnet59_spec())
    lines = text.splitlines()
    # drop the last block: 18 blocks no longer add up to the declared 59
    with pytest.raises(SpecParseError, match="declared depth 59"):
        parse_arch_spec("\n".join(lines[:-1]) + "\n")


def test_specfile_comments_and_defaults():
    text = """
    # two-stage toy
    arch name=tiny head=false stem_channels=8   # trailing comment
    stage stage1 stride_in=1 entry=stem
    stage stage2 stride_in=2 entry=pool
    block kind=C cin=8 cmid=4 cout=16
    block kind=A cin=16 cmid=4 cout=16 dilation=2
    """
    spec = parse_arch_spec(text)
    assert spec.name == "tiny" and not spec.head
    assert stride_map(spec) == (2, 4)
    assert spec.stage("stage2").blocks[1].dilation == 2
    assert depth(spec) == 7


@pytest.mark.parametrize("text,fragment", [
    ("stage stage1 stride_in=1 entry=stem\n", "missing arch"),
    ("arch name=x\nblock kind=A cin=1 cmid=1 cout=1\n", "block before any stage"),
    ("arch name=x\nlayer foo\n", "unknown directive"),
    ("arch name=x\nstage s1 stride_in=one entry=stem\n", "integer"),
    ("arch name=x head=maybe\nstage s1 stride_in=1 entry=stem\n", "head"),
])
def test_specfile_errors(text, fragment):
    with pytest.raises(SpecParseError, match=fragment):
        parse_arch_spec(text)
