"""Kernel backend selection.

The two per-slot hot kernels (link grid, fused policy step) have a compiled
core (``_core``, built from Cython) preferred when present, and NumPy
fallbacks in ``pure``.  Override with XSCHED_BACKEND=pure or
XSCHED_BACKEND=compiled (the latter raises if the extension is missing).
"""

import os

from . import pure

_requested = os.environ.get("XSCHED_BACKEND", "").strip().lower()

if _requested not in ("", "pure", "compiled"):
    raise ImportError(f"XSCHED_BACKEND must be 'pure' or 'compiled', got {_requested!r}")

if _requested == "pure":
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = pure
        BACKEND = "pure"

link_grid = _impl.link_grid
actor_step = _impl.actor_step

__all__ = ["BACKEND", "link_grid", "actor_step", "pure"]
