"""Build script for the compiled kernel extension.

The extension is optional: if it fails to build or import, the package falls
back to the NumPy implementations in crosspatch._kernels.pure.

-ffp-contract=off keeps the C float arithmetic bit-identical to NumPy
(no fused multiply-add), which the kernel equivalence tests rely on.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "crosspatch._kernels._core",
                ["src/crosspatch/_kernels/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
