from setuptools import Extension, setup

# The compiled kernel is optional: hbgsim.kernels falls back to the pure
# Python implementation when the extension is missing. No -ffast-math /
# -march flags: the two kernels must produce bit-identical trajectories.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [Extension("hbgsim.kernels._speedups", ["src/hbgsim/kernels/_speedups.pyx"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
