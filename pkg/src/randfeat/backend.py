"""Selects the compiled fast path when available, NumPy otherwise.

Set ``RANDFEAT_BACKEND=python`` to force the reference implementation or
``RANDFEAT_BACKEND=compiled`` to fail loudly when the extension is missing.
"""

from __future__ import annotations

import os

from . import _refpath

_requested = os.environ.get("RANDFEAT_BACKEND", "auto")
if _requested not in ("auto", "python", "compiled"):
    raise ValueError(f"unknown RANDFEAT_BACKEND value {_requested!r}")

if _requested == "python":
    _impl = _refpath
    BACKEND = "python"
else:
    try:
        from . import _fastpath as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _refpath
        BACKEND = "python"

BLOWUP_LIMIT = _refpath.BLOWUP_LIMIT
euler_lorenz = _impl.euler_lorenz
rff_weighted_cos = _impl.rff_weighted_cos
rff_rollout = _impl.rff_rollout


def available_backends() -> dict:
    """Importable kernel modules keyed by name (used by the benchmark)."""
    modules = {"python": _refpath}
    try:
        from . import _fastpath

        modules["compiled"] = _fastpath
    except ImportError:
        pass
    return modules
