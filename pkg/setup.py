"""Build the optional compiled integration kernel.

The package works without it (pure-Python fallback); set
FOWLERLAB_NO_EXT=1 to skip compilation entirely.
"""
import os

from setuptools import setup

ext_modules = []
if not os.environ.get("FOWLERLAB_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "fowlerlab._ckernel",
                    ["src/fowlerlab/_ckernel.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
