"""Kernel backend selection, resolved once at import.

The compiled extension is preferred when it was built; otherwise the pure
numpy fallback is used. Set DISTILCULL_PURE_PYTHON=1 to force the fallback
(the benchmark does this to compare the two).
"""

from __future__ import annotations

import os

if os.environ.get("DISTILCULL_PURE_PYTHON", "") not in ("", "0"):
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as kernels  # type: ignore[no-redef]


def backend_name() -> str:
    """Name of the active kernel backend: "compiled" or "python"."""
    return kernels.BACKEND
