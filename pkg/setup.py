"""Build script for the compiled settlement kernel.

The package works without the extension: drcontracts._kernels falls back to a
pure-numpy implementation when the compiled module is absent or fails to load.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "drcontracts._kernels._settlement",
        ["src/drcontracts/_kernels/_settlement.pyx"],
    )
]

if cythonize is not None:
    ext_modules = cythonize(extensions, language_level=3)
else:
    ext_modules = []

setup(ext_modules=ext_modules)
