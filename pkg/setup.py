from Cython.Build import cythonize
from setuptools import Extension, setup

ext_modules = [
    Extension(
        "vlpl_lab._backend._fused",
        ["src/vlpl_lab/_backend/_fused.pyx"],
    )
]

setup(ext_modules=cythonize(ext_modules, language_level="3"))
