"""Pick the compiled integrator when available.

Set ``PERCHSIM_PURE_PYTHON=1`` to force the Python fallback.
"""

import os

from . import _kernel_py

if os.environ.get("PERCHSIM_PURE_PYTHON", "") not in ("", "0"):
    integrate = _kernel_py.integrate
    BACKEND = "python"
else:
    try:
        from ._kernel import integrate
    except ImportError:
        integrate = _kernel_py.integrate
        BACKEND = "python"
    else:
        BACKEND = "cython"

python_integrate = _kernel_py.integrate
