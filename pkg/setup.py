"""Builds the optional compiled kernel extension.

The package works without it (a numpy fallback is selected at import); the
extension just speeds up the fused elementwise loops.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize
    ext_modules = cythonize(
        ["src/altdebias/_kernels_c.pyx"],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
