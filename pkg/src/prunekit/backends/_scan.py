"""Kernel selection: compiled scan if built, pure Python otherwise.

Set PRUNEKIT_PURE_PYTHON=1 to force the fallback (used by the benchmark
and by tests that exercise both paths).
"""

from __future__ import annotations

import os

if os.environ.get("PRUNEKIT_PURE_PYTHON"):
    from . import _scan_py as _impl

    COMPILED = False
else:
    try:
        from . import _scan_cy as _impl  # type: ignore[attr-defined]

        COMPILED = True
    except ImportError:
        from . import _scan_py as _impl

        COMPILED = False

seq_logprobs = _impl.seq_logprobs
deletion_scan = _impl.deletion_scan
