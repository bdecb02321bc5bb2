"""Build the optional compiled ROCKET kernel.

Without Cython or a C compiler the package still installs and runs on the
numpy fallback.
"""

import os
import sys

from setuptools import setup

ext_modules = []
if os.environ.get("MTSXPLAIN_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        openmp = [] if sys.platform == "darwin" else ["-fopenmp"]
        ext_modules = cythonize(
            [
                Extension(
                    "mtsxplain.rocket._kernels",
                    ["src/mtsxplain/rocket/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"] + openmp,
                    extra_link_args=openmp,
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
