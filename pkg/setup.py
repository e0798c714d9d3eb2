"""Build script: compiles the optional closure-enumeration extension.

The extension is marked optional so installation succeeds on hosts without
a C toolchain; the package then falls back to the pure-Python kernels.
Set SCM_IDENT_SKIP_EXT=1 to skip the extension build entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SCM_IDENT_SKIP_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "scm_ident._kernels._closure_fast",
                    ["src/scm_ident/_kernels/_closure_fast.pyx"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
