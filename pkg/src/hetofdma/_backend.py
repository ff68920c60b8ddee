"""Pick the compiled kernels when available.

Set ``HETOFDMA_BACKEND=python`` to force the pure-Python fallback, or
``cython`` to make a missing extension an import error.
"""

import os

from . import _pykernels

kernels = _pykernels
NAME = "python"

_WANT = os.environ.get("HETOFDMA_BACKEND", "").lower()

if _WANT != "python":
    try:
        from . import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        if _WANT == "cython":
            raise
    else:
        kernels = _compiled
        NAME = "cython"
