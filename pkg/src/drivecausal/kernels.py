"""Hot-kernel dispatch: the compiled extension when built, else the numpy fallback.

Set ``DRIVECAUSAL_PURE_PYTHON=1`` before import to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("DRIVECAUSAL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

fv_counts = _impl.fv_counts
lcs_length = _impl.lcs_length
tie_hits = _impl.tie_hits

__all__ = ["BACKEND", "fv_counts", "lcs_length", "tie_hits"]
