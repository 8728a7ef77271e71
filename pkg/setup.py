"""Build script for the optional compiled kernels.

The extension is a pure speed-up: if Cython or a C compiler is missing,
the build falls back to a pure-Python install and tiledsent selects the
NumPy kernels at import time.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build extensions, but never fail the install because of them."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"tiledsent: skipping compiled kernels ({exc})", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(
                f"tiledsent: could not build {ext.name} ({exc}); "
                "the pure-Python kernels will be used",
                file=sys.stderr,
            )


def _extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        print("tiledsent: Cython not available, building without compiled kernels",
              file=sys.stderr)
        return []
    return cythonize(
        ["src/tiledsent/_fastops.pyx"],
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(
    ext_modules=_extensions(),
    cmdclass={"build_ext": OptionalBuildExt},
)
