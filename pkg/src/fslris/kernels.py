"""Kernel dispatch.

The compiled ``_kernels`` extension is used when it imports; otherwise the
pure-Python twin in ``_kernels_py`` is loaded.  Setting the environment
variable ``FSLRIS_PURE_PYTHON=1`` forces the fallback, which is how the
benchmark and the parity tests exercise both.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("FSLRIS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "compiled"

spectral_efficiency = _impl.spectral_efficiency
bandwidth_for_rate = _impl.bandwidth_for_rate
min_max_latency = _impl.min_max_latency
phase_grid_search = _impl.phase_grid_search
MAX_GRID_COMBINATIONS = _kernels_py.MAX_GRID_COMBINATIONS


def load_backend(name: str):
    """Return the kernel module for ``name`` in ``{"python", "compiled"}``."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels as compiled  # type: ignore[attr-defined]

        return compiled
    raise ValueError(f"unknown kernel backend {name!r}")
