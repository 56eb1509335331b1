"""Build shim: compiles the optional Cython core, falling back to pure Python.

The package is fully functional without the extension (kcmkit.kernels picks
the numpy fallback at import time), so any failure here is downgraded to a
warning rather than aborting the install.
"""

import sys

from setuptools import Extension, setup


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError as exc:
        print(f"kcmkit: skipping compiled core ({exc})", file=sys.stderr)
        return []
    ext = Extension(
        "kcmkit._core",
        sources=["src/kcmkit/_core.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    try:
        return cythonize([ext], language_level="3")
    except Exception as exc:  # cython parse or toolchain trouble
        print(f"kcmkit: skipping compiled core ({exc})", file=sys.stderr)
        return []


setup(ext_modules=extensions())
