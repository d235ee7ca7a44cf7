"""Kernel backend selection.

The compiled extension is preferred when present; the pure-Python
fallback is used when the extension was not built or when the
``ODFLOW_PURE_PYTHON`` environment variable is set to a non-empty value
(useful for benchmarking and debugging). Both backends expose the same
functions and produce bit-identical results.
"""

from __future__ import annotations

import os

if os.environ.get("ODFLOW_PURE_PYTHON"):
    from . import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as kernels  # type: ignore[no-redef]

        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
