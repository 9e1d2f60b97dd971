import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# -ffp-contract=off: the kernel contract promises the exact same rounding as
# the NumPy fallback (separate multiply and add); fused multiply-add would
# change the last bits.
extensions = [
    Extension(
        "wsdn.kernels._core",
        ["src/wsdn/kernels/_core.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-ffp-contract=off"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
