"""Build script: compiles the pairwise-loss kernel extension when Cython and a
C toolchain are available.  The package works without it (numpy fallback is
selected at import), so extension build failures are non-fatal."""

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
                "xsrank._pairloss_cy",
                sources=["src/xsrank/_pairloss_cy.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
