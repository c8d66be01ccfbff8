"""Build the optional Cython kernels.

The package works without them: ``permsec.kernels`` falls back to the numpy
implementation when the extension cannot be imported.
"""

import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PERMSEC_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize
    except ImportError:
        cythonize = None
    if cythonize is not None:
        ext_modules = cythonize(
            [
                Extension(
                    "permsec._orbits",
                    ["src/permsec/_orbits.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                ),
                # no fused multiply-add: results must match the numpy fallback bit-for-bit
                Extension(
                    "permsec._dense",
                    ["src/permsec/_dense.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                ),
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
