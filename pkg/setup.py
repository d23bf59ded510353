import os

from setuptools import Extension, setup

# The compiled loop is an optional accelerator: if Cython (or a C compiler)
# is unavailable the package still installs and falls back to the pure-Python
# kernels at import time.
ext_modules = []
if os.environ.get("DSC_LAB_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "dsc_lab._core._fastloop",
                    ["src/dsc_lab/_core/_fastloop.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
