"""Backend selection for the hot kernels.

The compiled Cython extension is used when importable; otherwise (or with
``FLUIDBIA_PURE_PYTHON=1``) the numpy reference implementation is used.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("FLUIDBIA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

__all__ = ["BACKEND", "channel_gains", "bia_rates"]


def channel_gains(rx_dirs, sg, positions, wavenumber):
    return _impl.channel_gains(
        np.ascontiguousarray(rx_dirs, dtype=np.float64),
        np.ascontiguousarray(sg, dtype=np.complex128),
        np.ascontiguousarray(positions, dtype=np.float64),
        float(wavenumber),
    )


def bia_rates(h_est, delta, power, sigma2, num_users, literal_omega=False):
    return _impl.bia_rates(
        np.ascontiguousarray(h_est, dtype=np.complex128),
        np.ascontiguousarray(delta, dtype=np.complex128),
        float(power), float(sigma2), int(num_users), bool(literal_omega),
    )
