"""Build the optional compiled kernels; the package falls back to pure Python without them."""
import os
import sys

from setuptools import setup

ext_modules = []
if not os.environ.get("RPMONO_NO_BUILD_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension

        omp = [] if sys.platform == "darwin" else ["-fopenmp"]
        ext = Extension(
            "rpmono._kernels",
            ["src/rpmono/_kernels.pyx"],
            include_dirs=[np.get_include()],
            extra_compile_args=["-O3"] + omp,
            extra_link_args=omp,
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
        ext_modules = cythonize([ext], compiler_directives={"language_level": 3})
    except Exception as exc:  # build tools missing: ship the fallback only
        print(f"rpmono: skipping compiled kernels ({exc})", file=sys.stderr)

setup(ext_modules=ext_modules)
