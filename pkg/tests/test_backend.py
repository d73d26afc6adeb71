import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perchsim import _backend, _kernel_py
from perchsim.core import catalog_perch
from perchsim.dynamics import ApproachScenario, Disturbance, ImpactModel

MODEL = ImpactModel.default()

try:
    from perchsim import _kernel
except ImportError:
    _kernel = None

needs_ext = pytest.mark.skipif(_kernel is None, reason="compiled kernel not built")


def test_backend_reported():
    assert _backend.BACKEND in ("cython", "python")
    assert _backend.BACKEND == ("cython" if _kernel is not None else "python")


def test_pure_python_override():
    code = "from perchsim import _backend; print(_backend.BACKEND)"
    env = {**os.environ, "PERCHSIM_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
@settings(max_examples=30)
@given(st.floats(0.0, 2.5), st.floats(0.0, 12.0), st.integers(0, 2**32 - 1), st.booleans())
def test_kernels_bit_identical(v, theta, seed, record):
    sc = ApproachScenario(catalog_perch("wood-40", theta), impact_velocity=v)
    dist = Disturbance.draw(np.random.default_rng(seed), 1.0, MODEL.cal)
    p = MODEL.params(sc, dist, stop_early=not record, every=80 if record else 0)
    rows = 252 if record else 0
    rec_c, rec_p = np.zeros((rows, 5)), np.zeros((rows, 5))
    assert _kernel.integrate(p, rec_c) == _kernel_py.integrate(p, rec_p)
    np.testing.assert_array_equal(rec_c, rec_p)
