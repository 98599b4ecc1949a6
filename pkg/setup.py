import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SPECTRAL_POMDP_NO_EXT") != "1":
    try:
        import numpy
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "spectral_pomdp._native",
                    ["src/spectral_pomdp/_native.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        # no cython / numpy at build time: pure-python fallback is used instead
        ext_modules = []

setup(ext_modules=ext_modules)
