# Builds the optional compiled kernel core. If Cython or a C compiler is
# unavailable the install proceeds without it and rankpool falls back to the
# NumPy kernels at import time.
#
# Dev build:  python setup.py build_ext --inplace
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

ext_modules = []
if cythonize is not None:
    ext_modules = cythonize(
        [
            Extension(
                "rankpool._kernels._ckernels",
                ["src/rankpool/_kernels/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
