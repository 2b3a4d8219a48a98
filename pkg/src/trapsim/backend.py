"""Kernel backend selection.

The compiled extension is preferred; set TRAPSIM_PURE_PYTHON=1 to force the
numpy fallback (useful for benchmarking and as a safety net on platforms
where the extension did not build).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("TRAPSIM_PURE_PYTHON", "").strip() in ("1", "true", "yes"):
    kernels = _kernels_py
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        kernels = _kernels_py


def backend_name() -> str:
    return kernels.BACKEND
