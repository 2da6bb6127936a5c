"""Build script: compiles the optional Cython core.

The extension is marked optional -- if the toolchain or Cython is missing,
the install proceeds and the package falls back to the pure-numpy kernels
at import time (see wbp._backend).
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy as np
    from Cython.Build import cythonize

    ext = Extension(
        "wbp._core",
        ["src/wbp/_core.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
    ext_modules = cythonize([ext], language_level=3)
except ImportError:
    pass

setup(ext_modules=ext_modules)
