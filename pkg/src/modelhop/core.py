"""Backend selection for the hot inner loops.

The compiled extension ``modelhop._core`` is used when it was built and
``MODELHOP_PURE_PYTHON`` is unset; otherwise the numpy reference
implementations in ``modelhop._pycore`` are used.
"""

import os

from . import _pycore

if os.environ.get("MODELHOP_PURE_PYTHON"):
    _impl = _pycore
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _pycore
        BACKEND = "python"

chol_update = _impl.chol_update
select_index = _impl.select_index
subset_grid_lse = _impl.subset_grid_lse

__all__ = ["BACKEND", "chol_update", "select_index", "subset_grid_lse"]
