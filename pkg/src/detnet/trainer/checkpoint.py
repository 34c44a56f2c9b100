"""Binary weight checkpoints.

Layout (little-endian)::

    b"DNETCKPT"  u32 version=1  u32 tensor_count
    per tensor:  u16 name_len, utf-8 name, u8 rank, u32 dims[rank], f32 data
    u64 iteration

Optimizer momentum buffers are stored as ordinary tensors under
``momentum/<param name>``.
"""

import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"DNETCKPT"
VERSION = 1
MOMENTUM_PREFIX = "momentum/"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    iteration: int = 0
    version: int = VERSION

    @property
    def weights(self):
        return OrderedDict((k, v) for k, v in self.tensors.items() if not k.startswith(MOMENTUM_PREFIX))

    @property
    def momentum(self):
        n = len(MOMENTUM_PREFIX)
        return OrderedDict((k[n:], v) for k, v in self.tensors.items() if k.startswith(MOMENTUM_PREFIX))

    def to_bytes(self):
        parts = [MAGIC, struct.pack("<II", self.version, len(self.tensors))]
        for name, arr in self.tensors.items():
            raw = name.encode("utf-8")
            arr = np.asarray(arr)
            parts.append(struct.pack("<H", len(raw)) + raw)
            parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        parts.append(struct.pack("<Q", self.iteration))
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf):
        if buf[:8] != MAGIC:
            raise CheckpointError(f"bad magic {buf[:8]!r}")
        version, count = struct.unpack_from("<II", buf, 8)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        off = 16
        tensors = OrderedDict()
        try:
            for _ in range(count):
                (n,) = struct.unpack_from("<H", buf, off)
                name = buf[off + 2:off + 2 + n].decode("utf-8")
                off += 2 + n
                (rank,) = struct.unpack_from("<B", buf, off)
                dims = struct.unpack_from(f"<{rank}I", buf, off + 1)
                off += 1 + 4 * rank
                size = int(np.prod(dims, dtype=np.int64))
                tensors[name] = np.frombuffer(buf, dtype="<f4", count=size, offset=off).reshape(dims).astype(np.float32)
                off += 4 * size
            (iteration,) = struct.unpack_from("<Q", buf, off)
            off += 8
        except (struct.error, ValueError) as e:
            raise CheckpointError(f"truncated checkpoint: {e}") from None
        if off != len(buf):
            raise CheckpointError(f"{len(buf) - off} trailing bytes")
        return cls(tensors, iteration, version)


def write_checkpoint(path, ckpt):
    with open(path, "wb") as fh:
        fh.write(ckpt.to_bytes())


def read_checkpoint(path):
    with open(path, "rb") as fh:
        return Checkpoint.from_bytes(fh.read())


def checkpoint_from(net, optimizer=None, iteration=None):
    tensors = OrderedDict(net.state())
    if optimizer is not None:
        for name, v in optimizer.state().items():
            tensors[MOMENTUM_PREFIX + name] = v
        iteration = optimizer.iteration if iteration is None else iteration
    return Checkpoint(tensors, iteration or 0)


def save_weights(net, path, optimizer=None, iteration=None):
    ckpt = checkpoint_from(net, optimizer, iteration)
    write_checkpoint(path, ckpt)
    return ckpt


def load_weights(net, path, partial=False, optimizer=None, prefixes=None):
    """Copy checkpoint values into ``net`` (and ``optimizer`` momentum).

    Strict mode requires the exact same names and shapes.  With ``partial``
    only entries whose name and shape both match are loaded; ``prefixes``
    further restricts a partial load to names under those modules (e.g.
    ``("stage1", "stage2")``).  Returns the list of loaded names.
    """
    ckpt = read_checkpoint(path)
    state = net.state()
    weights = ckpt.weights
    if prefixes is not None:
        if not partial:
            raise ValueError("prefixes only apply to a partial load")
        keep = tuple(p.rstrip(".") + "." for p in prefixes)
        weights = OrderedDict((k, v) for k, v in weights.items() if k.startswith(keep))
    if not partial:
        for (a, va), (b, vb) in zip(state.items(), weights.items()):
            if a != b or va.shape != vb.shape:
                raise CheckpointError(
                    f"mismatch at {a!r} {va.shape}: checkpoint has {b!r} {vb.shape}"
                )
        if len(state) != len(weights):
            extra = list(state)[len(weights):] or list(weights)[len(state):]
            raise CheckpointError(f"tensor count differs ({len(state)} vs {len(weights)}); first unmatched {extra[0]!r}")
    loaded = []
    for name, arr in state.items():
        src = weights.get(name)
        if src is not None and src.shape == arr.shape:
            arr[...] = src
            loaded.append(name)
    if optimizer is not None:
        mom = ckpt.momentum
        for name, buf in zip(optimizer.names, optimizer.momentum):
            if name in mom and mom[name].shape == buf.shape:
                buf[...] = mom[name]
        optimizer.iteration = ckpt.iteration
    return loaded
