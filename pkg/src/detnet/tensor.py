"""Dense tensors with a reverse-mode autodiff tape.

A :class:`Tensor` wraps a numpy array.  Operators in :mod:`detnet.ops`
attach a backward closure to their output when any input requires a
gradient; :meth:`Tensor.backward` walks that graph in reverse topological
order and accumulates into ``.grad`` of every leaf that asked for one.
"""

from contextlib import contextmanager

import numpy as np

DEFAULT_DTYPE = np.float32

_grad_enabled = True


class AutogradError(RuntimeError):
    pass


class ShapeError(ValueError):
    """Operand shapes are inconsistent; ``dim`` names the offending dimension."""

    def __init__(self, message, dim=None):
        super().__init__(message)
        self.dim = dim


@contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


class Tensor:
    """NCHW feature map (or any rank) with an optional gradient buffer.

    Args:
        data: array-like; converted to ``dtype`` (float32 unless the input is
            already a float64 array or ``dtype`` says otherwise).
        requires_grad: leaf tensors with this flag receive ``.grad`` on
            :meth:`backward`.
        name: optional label, used by checkpoints and error messages.
    """

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype == np.float64 else DEFAULT_DTYPE
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.name = name
        self.grad = None
        self._parents = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data, parents, backward):
        out = cls(data, dtype=data.dtype)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self):
        return self._backward is None

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"

    def _topo(self):
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return order

    def backward(self, grad=None):
        """Backpropagate from this tensor.

        ``grad`` defaults to ones for a scalar.  Contributions from a value
        used more than once are summed.
        """
        if self._backward is None:
            raise AutogradError(
                "backward() called on a tensor with no recorded forward graph"
            )
        if grad is None:
            if self.data.size != 1:
                raise AutogradError("grad must be given for a non-scalar output")
            grad = np.ones_like(self.data)
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(self._topo()):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)
