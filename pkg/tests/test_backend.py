"""The compiled kernels must agree with the pure-Python reference."""

import numpy as np
import pytest

from misprice import _kernels_py
from misprice.backend import BACKEND
from misprice.ode import log_mesh

try:
    from misprice import _kernels
except ImportError:
    _kernels = None

pytestmark = pytest.mark.skipif(_kernels is None, reason="compiled kernels unavailable")


def test_backend_reports_compiled():
    assert BACKEND in ("cython", "python")


def test_ode_run_agrees():
    rng = np.random.default_rng(0)
    for n in (2, 5):
        u0 = rng.uniform(0.3, 0.9, n)
        v0 = np.diag(rng.uniform(1e-4, 1e-2, n))
        hs = log_mesh(np.log(50.0), 1e-3)
        out_c = _kernels.ode_run(1.0, 1.0, 0.5, 0.1, 1.0, u0, v0, 1.0, hs, 100)
        out_p = _kernels_py.ode_run(1.0, 1.0, 0.5, 0.1, 1.0, u0, v0, 1.0, hs, 100)
        for a, b in zip(out_c, out_p):
            assert a.shape == b.shape
            assert np.abs(a - b).max() < 1e-12


def test_pipeline_agrees():
    rng = np.random.default_rng(1)
    k, t, n = 30, 70, 3
    expl = rng.uniform(0.55, 0.8, size=(k, n))
    shocks = rng.uniform(-0.03, 0.03, size=(k + t, n))
    out_c = _kernels.pipeline(1.0, 1.0, 0.5, 0.1, 1.0, k, t, expl, shocks)
    out_p = _kernels_py.pipeline(1.0, 1.0, 0.5, 0.1, 1.0, k, t, expl, shocks)
    assert out_c[0] == out_p[0] == 0
    for a, b in zip(out_c[1:], out_p[1:]):
        assert np.abs(np.asarray(a) - np.asarray(b)).max() < 1e-12


def test_symmetric_run_agrees():
    hs = log_mesh(np.log(1000.0), 1e-3)
    out_c = _kernels.symmetric_run(1.0, 1.0, 0.5, 0.1, 1.0, 0.75, 0.01, hs, 500)
    out_p = _kernels_py.symmetric_run(1.0, 1.0, 0.5, 0.1, 1.0, 0.75, 0.01, hs, 500)
    for a, b in zip(out_c, out_p):
        assert np.abs(a - b).max() < 1e-12
