"""Build script: compiles the optional Cython attention kernel.

The package works without the extension (a numpy fallback is selected at
import time), so the build degrades gracefully when Cython or a C compiler
is missing.  Build in place with:

    python setup.py build_ext --inplace
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "revseg._attention_c",
                ["src/revseg/_attention_c.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
