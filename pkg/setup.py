"""Build script: compiles the slicing kernel when Cython and a C compiler
are available, otherwise installs the pure-Python package (the kernel
selector falls back at import time)."""

import sys

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "reebspace._kernel",
                ["src/reebspace/_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                language="c++",
            )
        ],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    sys.stderr.write(f"reebspace: skipping compiled kernel ({exc})\n")

setup(ext_modules=ext_modules)
