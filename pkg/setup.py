"""Build script: compiles the optional speedup extension when Cython is available.

The package is fully functional without the extension; `lineupdx.kernels`
falls back to the pure-Python implementations at import time.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        "src/lineupdx/kernels/_speedups.pyx",
        compiler_directives={"language_level": "3"},
    )
    for ext in ext_modules:
        ext.include_dirs.append(numpy.get_include())
except ImportError:
    pass

setup(ext_modules=ext_modules)
