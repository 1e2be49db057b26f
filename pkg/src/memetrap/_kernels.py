"""Pick the compiled kernels when available, else the pure-Python ones.

Set ``MEMETRAP_PURE=1`` to force the Python fallback.
"""

import os

from . import _pykernels as python_backend

try:
    if os.environ.get("MEMETRAP_PURE") == "1":
        raise ImportError("pure-Python kernels requested")
    from . import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

active = compiled_backend if compiled_backend is not None else python_backend

BACKEND = active.BACKEND
cascade_walk = active.cascade_walk
cascade_argmax = active.cascade_argmax
fit_tree = active.fit_tree
predict_tree = active.predict_tree
