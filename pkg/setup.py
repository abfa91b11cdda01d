import os

from setuptools import Extension, setup

# Set CVQKD_LAB_NO_EXT=1 to install the pure-Python package only.
ext_modules = []
if not os.environ.get("CVQKD_LAB_NO_EXT"):
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "cvqkd_lab._ckernels",
                ["src/cvqkd_lab/_ckernels.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
