"""Backend selection for the numerical hot loops.

The Cython extension is used when it is importable; otherwise (or when the
environment variable ``OFDMA_RANGING_PURE_PYTHON`` is set to a non-empty,
non-zero value) the pure-Python implementation is loaded.
"""

import importlib
import os
from types import ModuleType

from . import _kernels_py


def _load_compiled() -> ModuleType | None:
    try:
        return importlib.import_module(f"{__package__}._kernels")
    except ImportError:
        return None


def _pure_requested() -> bool:
    return os.environ.get("OFDMA_RANGING_PURE_PYTHON", "") not in ("", "0")


compiled = _load_compiled()
_active = _kernels_py if (compiled is None or _pure_requested()) else compiled

BACKEND = "python" if _active is _kernels_py else "cython"
jacobi_evd = _active.jacobi_evd
music_scan = _active.music_scan


def backend(name: str) -> ModuleType:
    """Return the kernel module called ``name`` ('python' or 'cython')."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        if compiled is None:
            raise ImportError("the compiled _kernels extension is not built")
        return compiled
    raise ValueError(f"unknown backend {name!r}")
