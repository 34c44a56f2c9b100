"""DetNet / ResNet backbones: construction, static analysis, numerics and toy training."""

from ._accel import get_backend, set_backend, use_backend
from .tensor import AutogradError, ShapeError, Tensor, no_grad

__version__ = "0.1.0"
