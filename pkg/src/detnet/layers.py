"""Parameter-owning layers on top of :mod:`detnet.ops`."""

import numpy as np

from . import ops
from .tensor import Tensor


class Module:
    """Minimal container: attributes that are Tensors with ``requires_grad``
    are parameters, attributes that are Modules (or lists of them) are
    children.  Registration order is attribute assignment order.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "qualname", "")

    def __setattr__(self, key, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[key] = value
        elif isinstance(value, Module):
            self._children[key] = value
        elif isinstance(value, list) and value and all(isinstance(v, Module) for v in value):
            for i, v in enumerate(value):
                self._children[f"{key}{i}"] = v
        object.__setattr__(self, key, value)

    def named_modules(self, prefix=""):
        yield prefix, self
        for key, child in self._children.items():
            yield from child.named_modules(f"{prefix}.{key}" if prefix else key)

    def named_parameters(self, prefix=""):
        for mod_name, mod in self.named_modules(prefix):
            for key, t in mod._params.items():
                yield (f"{mod_name}.{key}" if mod_name else key), t

    def named_buffers(self, prefix=""):
        for mod_name, mod in self.named_modules(prefix):
            for key, arr in mod._buffers():
                yield (f"{mod_name}.{key}" if mod_name else key), arr

    def _buffers(self):
        return ()

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def state(self):
        """Ordered mapping name -> array of every parameter and buffer."""
        out = {}
        for name, t in self.named_parameters():
            out[name] = t.data
        for name, arr in self.named_buffers():
            out[name] = arr
        return out

    def num_parameters(self, include_buffers=True):
        n = sum(t.data.size for _, t in self.named_parameters())
        if include_buffers:
            n += sum(a.size for _, a in self.named_buffers())
        return n

    def assign_names(self, prefix=""):
        for name, mod in self.named_modules(prefix):
            object.__setattr__(mod, "qualname", name)
        return self

    def set_bn_mode(self, mode):
        for _, mod in self.named_modules():
            if isinstance(mod, BatchNorm2d):
                mod.params.mode = mode

    def zero_grad(self):
        for t in self.parameters():
            t.grad = None


def he_normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    def __init__(self, c_in, c_out, k, stride=1, padding=0, dilation=1, bias=False,
                 rng=None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor(he_normal(rng, (c_out, c_in, k, k), c_in * k * k, dtype), requires_grad=True)
        if bias:
            self.bias = Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)
        self.params = ops.ConvParams(self.weight, self.bias if bias else None, stride, padding, dilation)

    def __call__(self, x):
        return ops.conv2d(x, self.params, name=self.qualname or None)


class BatchNorm2d(Module):
    def __init__(self, c, mode="training", dtype=np.float32):
        super().__init__()
        self.params = ops.BatchNormParams.identity(c, mode=mode, dtype=dtype)
        self.gamma = self.params.gamma
        self.beta = self.params.beta

    def _buffers(self):
        return (("running_mean", self.params.running_mean), ("running_var", self.params.running_var))

    def __call__(self, x):
        return ops.batch_norm(x, self.params)


class Linear(Module):
    def __init__(self, d, classes, rng=None, dtype=np.float32, std=0.01):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor((rng.standard_normal((classes, d)) * std).astype(dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(classes, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return ops.linear(x, self.weight, self.bias, name=self.qualname or None)
