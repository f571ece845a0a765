import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# The extension is optional: without a compiler the install still succeeds
# and the package runs on the numpy kernel backend.
extensions = [
    Extension(
        "memcap.kernels._ckern",
        ["src/memcap/kernels/_ckern.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3", "-march=native"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
