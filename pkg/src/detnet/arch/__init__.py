from .network import (
    InputSizeError,
    Network,
    backbone_features,
    build_network,
    forward_classifier,
)
from .specfile import SpecParseError, parse_arch_spec, serialize_arch_spec
from .specs import (
    BUILTIN,
    ArchSpec,
    ArchSpecError,
    StageSpec,
    detnet59_noproj_spec,
    detnet59_spec,
    get_spec,
    resnet50_dilated_spec,
    resnet50_spec,
    resnet101_spec,
    scale_width,
)
