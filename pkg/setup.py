"""Build script for the optional compiled EM core.

The package works without the extension (a numpy fallback is selected at
import time); building it just makes per-query profile re-estimation faster.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "lppm._emcore",
                ["src/lppm/_emcore.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
