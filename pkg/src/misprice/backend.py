"""Kernel backend selection.

Prefers the compiled extension; falls back to the pure-Python kernels when
the extension is missing or when ``MISPRICE_PURE_PYTHON`` is set (useful
for benchmarking and for debugging the reference implementation).
"""

import os

if os.environ.get("MISPRICE_PURE_PYTHON"):
    from . import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _kernels_py as kernels

        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
