import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_complex
from fluidbia import _kernels_py, kernels

try:
    from fluidbia import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

needs_ext = pytest.mark.skipif(_kernels_c is None, reason="compiled extension not built")


def _inputs(rng, n=500):
    dirs = rng.normal(size=(4, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    sg = random_complex(rng, (4, 2))
    pos = rng.uniform(-1, 1, size=(n, 3))
    return dirs, sg, pos


def test_python_channel_gains_matches_formula(rng):
    dirs, sg, pos = _inputs(rng, 20)
    k = 1234.5
    h = _kernels_py.channel_gains(dirs, sg, pos, k)
    for i in range(20):
        f = np.exp(1j * k * dirs @ pos[i])
        np.testing.assert_allclose(h[i], f.conj() @ sg, atol=1e-12)


@needs_ext
def test_backends_agree_on_channels(rng):
    dirs, sg, pos = _inputs(rng)
    np.testing.assert_allclose(_kernels_c.channel_gains(dirs, sg, pos, 1257.0),
                               _kernels_py.channel_gains(dirs, sg, pos, 1257.0), atol=1e-11)


@needs_ext
@pytest.mark.parametrize("literal", [False, True])
def test_backends_agree_on_rates(rng, literal):
    est = random_complex(rng, (1000, 2, 2))
    d = random_complex(rng, (1000, 2, 2)) * 0.05
    a = _kernels_c.bia_rates(est, d, 0.25, 1e-9, 4, literal)
    b = _kernels_py.bia_rates(est, d, 0.25, 1e-9, 4, literal)
    np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-9)


def test_wrapper_accepts_noncontiguous(rng):
    dirs, sg, pos = _inputs(rng, 50)
    wide = np.zeros((50, 6))
    wide[:, ::2] = pos
    np.testing.assert_allclose(kernels.channel_gains(dirs, sg, wide[:, ::2], 10.0),
                               _kernels_py.channel_gains(dirs, sg, pos, 10.0), atol=1e-12)


def test_empty_batch(rng):
    dirs, sg, _ = _inputs(rng)
    assert kernels.channel_gains(dirs, sg, np.zeros((0, 3)), 1.0).shape == (0, 2)
    assert kernels.bia_rates(np.zeros((0, 2, 2), complex), np.zeros((0, 2, 2), complex),
                             0.25, 1e-9, 4).shape == (0,)


def test_pure_python_switch():
    env = dict(os.environ, FLUIDBIA_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import fluidbia; print(fluidbia.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_ext
def test_extension_selected_by_default():
    assert kernels.BACKEND == "cython"
