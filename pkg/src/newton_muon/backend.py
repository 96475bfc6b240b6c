"""Kernel backend selection.

The compiled extension is preferred when importable; NEWTON_MUON_BACKEND
overrides ("compiled" | "python" | "auto"). Forcing "compiled" when the
extension is missing is an import-time error rather than a silent fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("NEWTON_MUON_BACKEND", "auto").lower()

if _choice not in ("auto", "compiled", "python"):
    raise RuntimeError(f"NEWTON_MUON_BACKEND={_choice!r} (expected auto|compiled|python)")

if _choice == "python":
    kernels = _kernels_py
else:
    try:
        from . import _kernels as _kernels_c  # type: ignore[attr-defined]

        kernels = _kernels_c
    except ImportError:
        if _choice == "compiled":
            raise
        kernels = _kernels_py

BACKEND_NAME: str = kernels.BACKEND_NAME


def get_kernels(name: str = "active"):
    """Return a kernel module by name; "active" gives the selected backend."""
    if name == "active":
        return kernels
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels as _kernels_c  # type: ignore[attr-defined]

        return _kernels_c
    raise ValueError(f"unknown backend {name!r}")
