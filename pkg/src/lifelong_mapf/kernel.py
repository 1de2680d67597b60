"""Selects the planning kernel implementation at import time.

The compiled extension (`_speedups`) is preferred; the pure-Python twin
(`_pykernel`) is the fallback.  Set LIFELONG_MAPF_PURE=1 to force the
fallback, e.g. for benchmarking or debugging.
"""

from __future__ import annotations

import os

if os.environ.get("LIFELONG_MAPF_PURE") == "1":
    from . import _pykernel as _impl
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _pykernel as _impl

plan_path = _impl.plan_path
scan_pairs = _impl.scan_pairs
first_conflict = _impl.first_conflict
UNREACHABLE = 1 << 30
IS_COMPILED = _impl.__name__.endswith("_speedups")
