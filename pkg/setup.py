"""Build script for the compiled kernel extension.

The package works without the extension (a NumPy fallback is selected at
import time); building it just makes the low-level image kernels faster.
No -ffast-math: the two backends are expected to agree bit-for-bit on the
operations that promise exact results.
"""

from setuptools import Extension, setup

import numpy as np

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "efface._kernels._ckern",
                sources=["src/efface/_kernels/_ckern.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level="3",
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
