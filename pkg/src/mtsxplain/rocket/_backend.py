"""Pick the compiled kernel when it imports, else the numpy fallback.

Set ``MTSXPLAIN_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _kernels_py

python_apply_kernels = _kernels_py.apply_kernels
compiled_apply_kernels = None

if os.environ.get("MTSXPLAIN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import apply_kernels as compiled_apply_kernels
    except ImportError:
        compiled_apply_kernels = None

if compiled_apply_kernels is not None:
    BACKEND = "cython"
    apply_kernels = compiled_apply_kernels
else:
    BACKEND = "python"
    apply_kernels = python_apply_kernels
