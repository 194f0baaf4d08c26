import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("CVMDI_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "cvmdi._kernels",
                ["src/cvmdi/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules, zip_safe=False)
