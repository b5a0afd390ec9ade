"""Pick the compiled kernel when it was built, else the numpy twin."""

import os

from . import _kernels_py

try:
    if os.environ.get("NDDSIZE_PURE_PYTHON"):
        raise ImportError("pure-python backend forced")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

HAVE_COMPILED = _compiled is not None
BACKEND = "cython" if HAVE_COMPILED else "python"

gauss_sum_sorted = (_compiled or _kernels_py).gauss_sum_sorted
gauss_product_scatter = (_compiled or _kernels_py).gauss_product_scatter

__all__ = ["BACKEND", "HAVE_COMPILED", "gauss_product_scatter", "gauss_sum_sorted"]
