"""Build script: compiles the optional stepping-kernel extension.

The package works without the extension (a pure NumPy/Python backend is
selected at import time), so a failed or skipped build is not fatal.
`-ffp-contract=off` keeps the compiled kernels bit-identical to the pure
backend, which the test suite checks.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "ergodiff.kernels._core",
                ["src/ergodiff/kernels/_core.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
