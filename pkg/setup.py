import os

from setuptools import Extension, setup

# The compiled kernel is an optimization, not a requirement: when Cython or a
# C compiler is missing (or BFL_NO_EXT=1 is set), the package installs without
# it and bfl.kernels falls back to the NumPy implementation at import time.
ext_modules = []
if os.environ.get("BFL_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "bfl._kernels",
                    ["src/bfl/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
