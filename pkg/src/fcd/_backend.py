"""Pick the coordinate-descent kernels at import time.

The compiled ``_cd_core`` extension is used when it imports; otherwise the
pure-Python ``_cd_fallback`` module.  Setting ``FCD_PURE_PYTHON=1`` forces the
fallback, which the test suite uses to exercise both paths.
"""

from __future__ import annotations

import os

from . import _cd_fallback

BACKEND = "python"
_compiled = None
if os.environ.get("FCD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _cd_core as _compiled
        BACKEND = "cython"
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _cd_fallback


def get_kernels(backend: str | None = None):
    """Return the kernel module for ``backend`` ("cython", "python" or None)."""
    if backend is None:
        return _impl
    if backend == "python":
        return _cd_fallback
    if backend == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not available; build the extension")
        return _compiled
    raise ValueError(f"unknown backend {backend!r}")


def compiled_available() -> bool:
    return _compiled is not None
