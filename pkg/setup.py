"""Build script for the optional compiled kernel extension.

The package works without the extension (a pure-Python fallback is selected
at import time); the extension only accelerates the hot table-building and
sampling kernels.  Set ECOMDEMAND_NO_EXT=1 to skip compilation entirely.
"""

import os

from setuptools import setup

extensions = []
if not os.environ.get("ECOMDEMAND_NO_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools.extension import Extension

        extensions = cythonize(
            [
                Extension(
                    "ecomdemand.kernels._speedups",
                    ["src/ecomdemand/kernels/_speedups.pyx"],
                    # -ffp-contract=off keeps float results bit-identical to
                    # the pure backend (no fused multiply-add).
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        extensions = []

setup(ext_modules=extensions)
