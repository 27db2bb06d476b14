"""Build script for the optional compiled simulation core.

The package is fully functional without the extension (a pure-NumPy
fallback is selected at import time), so a failed native build is
downgraded to a warning instead of aborting the install.
"""

import warnings

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "observer_pi._kernels._simcore",
                sources=["src/observer_pi/_kernels/_simcore.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError as exc:  # pragma: no cover - build environment dependent
    warnings.warn(f"building without compiled simulation core: {exc}")
    ext_modules = []

setup(ext_modules=ext_modules)
