"""Builds the optional compiled kernels.  Without Cython or scipy's BLAS
declarations the package installs with the numpy fallback only."""
from setuptools import Extension, setup

ext_modules = []
try:
    from Cython.Build import cythonize
    import scipy.linalg.cython_blas  # noqa: F401  (the .pyx cimports its dgemm)
except ImportError:
    pass
else:
    ext_modules = cythonize(
        [Extension("seqtag._kernels", ["src/seqtag/_kernels.pyx"],
                   extra_compile_args=["-O3"], optional=True)],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
