"""Kernel backend selection.

The compiled extension is used when it imports; setting
``RFA_PURE_PYTHON=1`` forces the pure-Python fallback.  Both produce
bit-identical results.
"""

from __future__ import annotations

import os

if os.environ.get("RFA_PURE_PYTHON", "") not in ("", "0"):
    from . import _fallback as kernels
else:
    try:
        from . import _kernels as kernels
    except ImportError:  # extension not built
        from . import _fallback as kernels

BACKEND: str = kernels.BACKEND

__all__ = ["kernels", "BACKEND"]
