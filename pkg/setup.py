import numpy
from setuptools import Extension, setup

# The compiled kernels are optional: without Cython (or a C compiler) the
# package installs pure-Python and furst.kernels falls back to the numpy
# implementations at import time. fp contraction is disabled so that float
# results are bit-identical between the two backends.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "furst._ckernels",
                ["src/furst/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
        annotate=False,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
