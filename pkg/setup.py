"""Build script for the compiled EM kernel.

The extension is optional: if no C toolchain is available the install
still succeeds and the package falls back to the NumPy kernel at import.
"""

import sys
from distutils.errors import CCompilerError, DistutilsExecError, DistutilsPlatformError

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:
    np = None
    cythonize = None

BUILD_ERRORS = (CCompilerError, DistutilsExecError, DistutilsPlatformError, OSError)


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except BUILD_ERRORS as exc:
            sys.stderr.write(f"skipping compiled kernel: {exc}\n")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except BUILD_ERRORS as exc:
            sys.stderr.write(f"skipping compiled kernel {ext.name}: {exc}\n")


if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "topicbench.kernels._em",
                ["src/topicbench/kernels/_em.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
else:
    extensions = []

setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
