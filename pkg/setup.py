from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # fallback loop is used at runtime
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension("nbmkl._smo", ["src/nbmkl/_smo.pyx"], extra_compile_args=["-O3"], optional=True)],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
