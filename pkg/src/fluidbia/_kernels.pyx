# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, log2

cnp.import_array()


def channel_gains(const double[:, ::1] rx_dirs, const double complex[:, ::1] sg,
                  const double[:, ::1] positions, double wavenumber):
    cdef Py_ssize_t n_pos = positions.shape[0]
    cdef Py_ssize_t n_path = rx_dirs.shape[0]
    out = np.empty((n_pos, 2), dtype=np.complex128)
    cdef double complex[:, ::1] h = out
    cdef Py_ssize_t n, j
    cdef double ph, c, s
    cdef double re0, im0, re1, im1
    cdef double complex g0, g1
    for n in range(n_pos):
        re0 = 0.0
        im0 = 0.0
        re1 = 0.0
        im1 = 0.0
        for j in range(n_path):
            ph = wavenumber * (positions[n, 0] * rx_dirs[j, 0]
                               + positions[n, 1] * rx_dirs[j, 1]
                               + positions[n, 2] * rx_dirs[j, 2])
            c = cos(ph)
            s = -sin(ph)
            g0 = sg[j, 0]
            g1 = sg[j, 1]
            re0 += c * g0.real - s * g0.imag
            im0 += c * g0.imag + s * g0.real
            re1 += c * g1.real - s * g1.imag
            im1 += c * g1.imag + s * g1.real
        h[n, 0] = re0 + 1j * im0
        h[n, 1] = re1 + 1j * im1
    return out


cdef inline double _abs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def bia_rates(const double complex[:, :, ::1] h_est, const double complex[:, :, ::1] delta,
              double power, double sigma2, int num_users, bint literal_omega=False):
    cdef Py_ssize_t n_inst = h_est.shape[0]
    out = np.empty(n_inst, dtype=np.float64)
    cdef double[::1] r = out
    cdef Py_ssize_t i
    cdef double n0 = num_users * sigma2
    cdef double n1 = sigma2
    cdef double dd00, dd11, hh00, hh11, o00, o11, a00, a11, det_o, det_a
    cdef double complex dd01, hh01, o01, a01
    if literal_omega:
        n0 *= power
        n1 *= power
    for i in range(n_inst):
        dd00 = _abs2(delta[i, 0, 0]) + _abs2(delta[i, 0, 1])
        dd11 = _abs2(delta[i, 1, 0]) + _abs2(delta[i, 1, 1])
        dd01 = (delta[i, 0, 0] * delta[i, 1, 0].conjugate()
                + delta[i, 0, 1] * delta[i, 1, 1].conjugate())
        hh00 = _abs2(h_est[i, 0, 0]) + _abs2(h_est[i, 0, 1])
        hh11 = _abs2(h_est[i, 1, 0]) + _abs2(h_est[i, 1, 1])
        hh01 = (h_est[i, 0, 0] * h_est[i, 1, 0].conjugate()
                + h_est[i, 0, 1] * h_est[i, 1, 1].conjugate())
        o00 = power * dd00 + n0
        o11 = power * dd11 + n1
        o01 = power * dd01
        a00 = o00 + power * hh00
        a11 = o11 + power * hh11
        a01 = o01 + power * hh01
        det_o = o00 * o11 - _abs2(o01)
        det_a = a00 * a11 - _abs2(a01)
        r[i] = log2(det_a / det_o)
    return out
