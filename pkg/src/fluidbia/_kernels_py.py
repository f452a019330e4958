"""Vectorized numpy implementations of the hot kernels.

Reference backend, used when the compiled ``_kernels`` extension is not
available or ``FLUIDBIA_PURE_PYTHON=1`` is set. Signatures match the
Cython module exactly.
"""

import numpy as np


def channel_gains(rx_dirs, sg, positions, wavenumber):
    """h[n, m] = sum_j exp(-i k <d_j, p_n>) sg[j, m].

    rx_dirs (L, 3) float, sg (L, 2) complex, positions (N, 3) float.
    """
    phase = wavenumber * (positions @ rx_dirs.T)
    f_conj = np.cos(phase) - 1j * np.sin(phase)
    return f_conj @ sg


def bia_rates(h_est, delta, power, sigma2, num_users, literal_omega=False):
    """Rate log2|I + P H H^H Omega^-1| for a batch of 2x2 systems.

    h_est, delta: (N, 2, 2) complex; row m is the pattern-m channel.
    Omega = P Delta Delta^H + diag(K sigma2, sigma2), or with
    ``literal_omega`` P (Delta Delta^H + diag(K sigma2, sigma2)).
    """
    d0, d1 = delta[:, 0, :], delta[:, 1, :]
    h0, h1 = h_est[:, 0, :], h_est[:, 1, :]
    dd00 = np.sum(np.abs(d0) ** 2, axis=1)
    dd11 = np.sum(np.abs(d1) ** 2, axis=1)
    dd01 = np.sum(d0 * d1.conj(), axis=1)
    hh00 = np.sum(np.abs(h0) ** 2, axis=1)
    hh11 = np.sum(np.abs(h1) ** 2, axis=1)
    hh01 = np.sum(h0 * h1.conj(), axis=1)
    n0 = num_users * sigma2
    n1 = sigma2
    if literal_omega:
        n0 *= power
        n1 *= power
    o00 = power * dd00 + n0
    o11 = power * dd11 + n1
    o01 = power * dd01
    a00 = o00 + power * hh00
    a11 = o11 + power * hh11
    a01 = o01 + power * hh01
    det_o = o00 * o11 - np.abs(o01) ** 2
    det_a = a00 * a11 - np.abs(a01) ** 2
    return np.log2(det_a / det_o)
