"""Kernel selection: compiled core when importable, numpy fallback otherwise.

Set KCMKIT_PURE=1 to force the fallback (used by the parity tests and the
benchmark). Both implementations expose the same three entry points with
identical semantics and, for the event loop, bit-identical trajectories.
"""

from __future__ import annotations

import os

from . import _pure

if os.environ.get("KCMKIT_PURE", "") not in ("", "0"):
    _impl = _pure
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

IMPLEMENTATION: str = _impl.IMPL_NAME

closure = _impl.closure
kcm_run = _impl.kcm_run
crossing_batch = _impl.crossing_batch


def implementations():
    """All importable kernel modules, name -> module (for benchmarks/tests)."""
    out = {"pure": _pure}
    try:
        from . import _core
        out["compiled"] = _core
    except ImportError:
        pass
    return out
