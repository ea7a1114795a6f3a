"""Hot-path tracer selection.

The compiled ``_kernels`` extension is used when it was built; otherwise the
pure-Python reference in ``_kernels_py`` is used.  Set ``HAPLOBENCH_PURE=1``
to force the fallback.
"""

import os

from . import _kernels_py
from ._kernels_py import EXTENT_MISS, LENS, MIRROR, NOT_CONVERGED, NOT_REACHED, PLANE, VIGNETTED

BACKEND = "python"
if os.environ.get("HAPLOBENCH_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

trace_path = _impl.trace_path
solve_chief = _impl.solve_chief

__all__ = [
    "BACKEND",
    "EXTENT_MISS",
    "LENS",
    "MIRROR",
    "NOT_CONVERGED",
    "NOT_REACHED",
    "PLANE",
    "VIGNETTED",
    "solve_chief",
    "trace_path",
]
