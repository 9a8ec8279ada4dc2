"""Build hooks for the optional compiled kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time), so any failure to cythonize or compile downgrades
the install instead of breaking it.
"""

import os

from setuptools import setup

ext_modules = []
try:
    if not os.path.exists("src/relaxdg/_kernels/_core.pyx"):
        raise ImportError("kernel source not present")
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "relaxdg._kernels._core",
                ["src/relaxdg/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
