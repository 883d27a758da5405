"""Build glue for the optional compiled sweep kernel.

The package is fully functional without it; when Cython and a C
compiler are present the extension is built and selected at import.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize
    ext_modules = cythonize(
        ["src/pucoord/_core.pyx"],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
