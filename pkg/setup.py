import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

setup(
    ext_modules=cythonize(
        [
            Extension(
                "relu_rb._kernels",
                ["src/relu_rb/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                # -ffp-contract=off: the realization contract fixes the
                # rounding of every multiply and add; FMA fusion would
                # change results relative to the python backend.
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
)
