import os
import platform
import sys

from setuptools import setup

ext_modules = []
if not os.environ.get("CANN_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        # glibc's libmvec supplies the SIMD tanh that -ffast-math lets gcc call
        vector_libm = sys.platform.startswith("linux") and platform.machine() == "x86_64"
        ext_modules = cythonize(
            [Extension("cann._kernels", ["src/cann/_kernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                       extra_compile_args=["-O3", "-march=native"]
                       + (["-ffast-math"] if vector_libm else []),
                       libraries=["mvec", "m"] if vector_libm else ["m"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
