"""Builds the optional compiled kernels; the package falls back to numpy without them."""
from setuptools import Extension, setup


def _extensions():
    try:
        import numpy as np
        import scipy  # noqa: F401  (cython_blas headers)
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "sfpro._kernels",
        ["src/sfpro/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        optional=True,
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
