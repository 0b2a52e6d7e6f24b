"""Build hook for the optional compiled kernel.

The package is fully functional without the extension (a numpy fallback is
selected at import time); building it just makes geodesic integration and
expression evaluation much faster.  If Cython or a C compiler is unavailable
the extension is silently skipped.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize
except ImportError:
    pass
else:
    ext_modules = cythonize(
        [
            Extension(
                "tansurf._kernels._core",
                ["src/tansurf/_kernels/_core.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
