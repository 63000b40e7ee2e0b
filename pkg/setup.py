"""Build script: compiles the optional normal-variate kernel.

The package works without the extension (a numpy implementation of the
same generator is selected at import time); the build therefore treats
any compilation failure as non-fatal.
"""

from setuptools import setup, Extension

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "superpose._normals",
                ["src/superpose/_normals.pyx"],
                extra_compile_args=["-O3", "-march=native", "-funroll-loops",
                    "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - toolchain-dependent
    print(f"skipping compiled kernel ({exc!r}); pure fallback will be used")

setup(ext_modules=ext_modules)
