"""Build hook for the optional compiled kernel extension.

The package is fully functional without the extension (the NumPy kernels in
``xsched._kernels.pure`` are used instead).  Set XSCHED_NO_EXT=1 to skip the
build explicitly, e.g. on machines without a C compiler.
"""

import os

from setuptools import Extension, setup


def _extensions():
    if os.environ.get("XSCHED_NO_EXT"):
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "xsched._kernels._core",
        sources=["src/xsched/_kernels/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=_extensions())
