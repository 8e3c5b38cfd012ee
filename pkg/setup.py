"""Build script for the optional compiled kernels.

The package works without the extension: ``misprice.backend`` falls back to
the pure-Python kernels when ``misprice._kernels`` is missing.
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
                "misprice._kernels",
                ["src/misprice/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
