"""Line-oriented text format for architecture specs.

::

    # comment
    arch name=detnet59 depth=59 in_channels=3 stem_channels=64 head=true
    stage stage1 stride_in=1 entry=stem
    stage stage2 stride_in=2 entry=pool
    block kind=C cin=64 cmid=64 cout=256 stride=1 dilation=1

``entry`` defaults to ``block``; ``stride_at=3x3`` on a block line moves
the transition stride onto the 3x3 conv.
"""

from ..blocks import BlockKind, BlockSpec, BlockSpecError
from .specs import ArchSpec, ArchSpecError, StageSpec


class SpecParseError(ValueError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


_ARCH_KEYS = {"name", "depth", "in_channels", "stem_channels", "head"}
_STAGE_KEYS = {"stride_in", "entry"}
_BLOCK_KEYS = {"kind", "cin", "cmid", "cout", "stride", "dilation", "stride_at"}


def _kv(tokens, allowed, lineno):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise SpecParseError(lineno, f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        if k not in allowed:
            raise SpecParseError(lineno, f"unknown key {k!r}")
        if k in out:
            raise SpecParseError(lineno, f"duplicate key {k!r}")
        out[k] = v
    return out


def _int(d, key, lineno, default=None):
    if key not in d:
        if default is None:
            raise SpecParseError(lineno, f"missing {key}")
        return default
    try:
        return int(d[key])
    except ValueError:
        raise SpecParseError(lineno, f"{key} must be an integer, got {d[key]!r}") from None


def parse_arch_spec(text):
    """Parse spec text; the result is validated before it is returned."""
    header = None
    stages = []  # [name, entry, stride_in, blocks, lineno]
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        word, *rest = line.split()
        if word == "arch":
            if header is not None:
                raise SpecParseError(lineno, "duplicate arch line")
            header = (_kv(rest, _ARCH_KEYS, lineno), lineno)
        elif word == "stage":
            if not rest or "=" in rest[0]:
                raise SpecParseError(lineno, "stage line needs a name")
            kv = _kv(rest[1:], _STAGE_KEYS, lineno)
            stages.append([rest[0], kv.get("entry", "block"), _int(kv, "stride_in", lineno), [], lineno])
        elif word == "block":
            if not stages:
                raise SpecParseError(lineno, "block before any stage")
            kv = _kv(rest, _BLOCK_KEYS, lineno)
            kind = kv.get("kind")
            if kind not in {k.value for k in BlockKind}:
                raise SpecParseError(lineno, f"unknown block kind {kind!r}")
            spec = BlockSpec(
                kind, _int(kv, "cin", lineno), _int(kv, "cmid", lineno), _int(kv, "cout", lineno),
                _int(kv, "stride", lineno, 1), _int(kv, "dilation", lineno, 1), kv.get("stride_at", "1x1"),
            )
            try:
                spec.validate()
            except BlockSpecError as e:
                raise SpecParseError(lineno, str(e)) from None
            stages[-1][3].append(spec)
        else:
            raise SpecParseError(lineno, f"unknown directive {word!r}")
    if header is None:
        raise SpecParseError(0, "missing arch line")
    kv, lineno = header
    if "name" not in kv:
        raise SpecParseError(lineno, "arch line needs name=")
    head = kv.get("head", "true").lower()
    if head not in ("true", "false"):
        raise SpecParseError(lineno, f"head must be true or false, got {head!r}")
    spec = ArchSpec(
        name=kv["name"],
        stages=tuple(StageSpec(n, e, tuple(b), s) for n, e, s, b, _ in stages),
        head=head == "true",
        in_channels=_int(kv, "in_channels", lineno, 3),
        stem_channels=_int(kv, "stem_channels", lineno, 64),
        depth=_int(kv, "depth", lineno) if "depth" in kv else None,
    )
    try:
        return spec.validate()
    except ArchSpecError as e:
        raise SpecParseError(lineno, f"invalid spec: {e}") from None


def serialize_arch_spec(spec):
    parts = [f"name={spec.name}"]
    if spec.depth is not None:
        parts.append(f"depth={spec.depth}")
    parts += [f"in_channels={spec.in_channels}", f"stem_channels={spec.stem_channels}",
              f"head={'true' if spec.head else 'false'}"]
    lines = [f"# {spec.name}", "arch " + " ".join(parts)]
    for st in spec.stages:
        lines.append(f"stage {st.name} stride_in={st.stride_in} entry={st.entry}")
        for b in st.blocks:
            line = (f"block kind={b.kind.value} cin={b.c_in} cmid={b.c_mid} cout={b.c_out} "
                    f"stride={b.stride} dilation={b.dilation}")
            if b.stride_at != "1x1":
                line += f" stride_at={b.stride_at}"
            lines.append(line)
    return "\n".join(lines) + "\n"
