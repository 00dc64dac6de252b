"""Build script for the optional compiled simulation kernel.

The package works without the extension (a numpy fallback is selected at
import time), so any build failure here downgrades to a warning instead of
aborting the install.
"""

import sys

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    # -ffp-contract=off keeps the C arithmetic bit-compatible with the numpy
    # fallback (no fused multiply-add), which the backend parity tests rely on.
    extensions = cythonize(
        [
            Extension(
                "spikefem._kernel",
                ["src/spikefem/_kernel.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"spikefem: compiled kernel disabled ({exc})", file=sys.stderr)
    extensions = []

setup(ext_modules=extensions)
