import os
import sys

from setuptools import Extension, setup

# The compiled kernel is optional: if Cython or a C++ toolchain is missing the
# package still installs and falls back to the pure-Python kernel at import time.
ext_modules = []
if os.environ.get("LIFELONG_MAPF_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
        import numpy as np

        extra = ["-O3"] if sys.platform != "win32" else ["/O2"]
        ext_modules = cythonize(
            [
                Extension(
                    "lifelong_mapf._speedups",
                    ["src/lifelong_mapf/_speedups.pyx"],
                    language="c++",
                    include_dirs=[np.get_include()],
                    extra_compile_args=extra,
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
