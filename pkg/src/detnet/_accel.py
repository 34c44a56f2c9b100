"""Backend selection for the hot kernels.

``DNET_BACKEND`` picks the kernel implementation: ``numba`` (default when
numba imports) or ``numpy``.  ``DNET_THREADS`` caps numba's thread pool.
"""

import os
import logging

logger = logging.getLogger(__name__)

# the system TBB is too old for numba; skip it instead of warning on every run
os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp workqueue tbb")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep in practice
    numba = None
    HAS_NUMBA = False

BACKENDS = ("numba", "numpy")


def _initial_backend():
    name = os.environ.get("DNET_BACKEND", "").strip().lower()
    if not name:
        return "numba" if HAS_NUMBA else "numpy"
    if name not in BACKENDS:
        raise ValueError(f"DNET_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        logger.warning("DNET_BACKEND=numba but numba is not importable; using numpy")
        return "numpy"
    return name


_backend = _initial_backend()


def get_backend():
    return _backend


def set_backend(name):
    """Switch the kernel backend at runtime; returns the previous one."""
    global _backend
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    prev, _backend = _backend, name
    return prev


class use_backend:
    """Context manager that temporarily switches the kernel backend."""

    def __init__(self, name):
        self.name = name
        self.prev = None

    def __enter__(self):
        self.prev = set_backend(self.name)
        return self

    def __exit__(self, *exc):
        set_backend(self.prev)


def configure_threads():
    threads = os.environ.get("DNET_THREADS")
    if not threads or not HAS_NUMBA:
        return
    n = max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


configure_threads()
