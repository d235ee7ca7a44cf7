from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off: the pure-Python fallback must stay bit-identical to
# the compiled kernels, so fused multiply-add contraction is disabled.
extensions = [
    Extension(
        "odflow._kernels",
        ["src/odflow/_kernels.pyx"],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
