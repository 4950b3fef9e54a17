"""Build the optional compiled kernels; the package works without them."""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("NMCONTROL_NO_EXT", "") in ("", "0"):
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [Extension(
                f"nmcontrol.kernels.{name}",
                [f"src/nmcontrol/kernels/{name}.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            ) for name in ("_chain", "_expm")],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
