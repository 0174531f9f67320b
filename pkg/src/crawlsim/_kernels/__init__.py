"""Numeric kernels with a compiled core and a pure-python fallback.

The depth ray-marcher dominates benchmark runtime, so it is implemented
twice: a Cython extension (crawlsim._kernels._core) and a vectorized
numpy fallback with identical semantics.  The backend is chosen once at
import; set CRAWLSIM_PURE_PY=1 to force the fallback.  Both are compiled
without FP contraction, so results agree bit-for-bit.
"""

import os

from . import fallback

if os.environ.get("CRAWLSIM_PURE_PY", "") == "1":
    _impl = fallback
    BACKEND = "fallback"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = fallback
        BACKEND = "fallback"

render_depth_raw = _impl.render_depth_raw
