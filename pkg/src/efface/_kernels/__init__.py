"""Low-level 2-D kernels with a compiled core and a NumPy fallback.

The backend is chosen once at import time:

- ``EFFACE_KERNELS=c``    require the compiled extension (ImportError if absent)
- ``EFFACE_KERNELS=py``   force the NumPy lane
- ``EFFACE_KERNELS=auto`` (default) compiled if available, NumPy otherwise

Both lanes implement the same arithmetic in the same order; see
``benchmarks/bench_kernels.py`` for a speed comparison.
"""

import os
import warnings

from . import pykern

_choice = os.environ.get("EFFACE_KERNELS", "auto").lower()

if _choice not in ("auto", "c", "py"):
    raise ValueError(f"EFFACE_KERNELS must be one of auto/c/py, got {_choice!r}")

if _choice == "py":
    _impl = pykern
    BACKEND = "py"
else:
    try:
        from . import _ckern as _impl  # type: ignore[no-redef]

        BACKEND = "c"
    except ImportError:
        if _choice == "c":
            raise
        warnings.warn(
            "efface compiled kernels unavailable; using the NumPy fallback "
            "(build the extension with `pip install -e .` for speed)",
            RuntimeWarning,
            stacklevel=2,
        )
        _impl = pykern
        BACKEND = "py"

sep_convolve = _impl.sep_convolve
minmax_filter = _impl.minmax_filter
resize_bilinear = _impl.resize_bilinear
resize_area = _impl.resize_area

__all__ = [
    "BACKEND",
    "sep_convolve",
    "minmax_filter",
    "resize_bilinear",
    "resize_area",
    "pykern",
]
