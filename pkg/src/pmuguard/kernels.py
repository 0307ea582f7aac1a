"""Backend selection for the hot loops.

The compiled extension is used when it imports; set ``PMUGUARD_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _pykernels as python_backend

compiled_backend = None
if not os.environ.get("PMUGUARD_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "compiled" if compiled_backend is not None else "python"

fit_window = backend.fit_window
sliding_centers = backend.sliding_centers
scan_detector = backend.scan_detector
class_min_similarity = backend.class_min_similarity

__all__ = [
    "BACKEND_NAME",
    "backend",
    "compiled_backend",
    "python_backend",
    "fit_window",
    "sliding_centers",
    "scan_detector",
    "class_min_similarity",
]
