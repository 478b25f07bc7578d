"""Kernel backend selection.

Imports the compiled extension when available, otherwise the NumPy fallback.
Set CROSSPATCH_PURE=1 to force the fallback (the benchmark and the backend
equivalence tests use this).
"""

import os

from . import pure

if os.environ.get("CROSSPATCH_PURE", "") not in ("", "0"):
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = pure
        BACKEND = "pure"

fill_polygon = _impl.fill_polygon
polyline_is_simple = _impl.polyline_is_simple

__all__ = ["BACKEND", "fill_polygon", "polyline_is_simple", "pure"]
