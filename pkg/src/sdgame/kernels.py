"""Backend selection for the HJBI time-step kernel.

The compiled extension is used when importable; ``SDGAME_PURE_PYTHON=1``
forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _fallback

try:
    if os.environ.get("SDGAME_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _kernel as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"numpy": _fallback}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

DEFAULT_BACKEND = "compiled" if _compiled is not None else "numpy"


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` ('auto', 'compiled' or 'numpy')."""
    if name in (None, "auto"):
        name = DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


def compiled_available() -> bool:
    return _compiled is not None
