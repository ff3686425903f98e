"""Build script: compiles the Cython kernel extension.

Set TOKENMARK_SKIP_EXT=1 to install without the compiled core; the
package then falls back to the pure-numpy kernels at import time.
"""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("TOKENMARK_SKIP_EXT"):
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "tokenmark._kernels._ckern",
                sources=["src/tokenmark/_kernels/_ckern.pyx"],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
