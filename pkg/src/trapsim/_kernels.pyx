# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: thermal sin^2 sums and the gate Lindblad RHS."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sin, sqrt

cnp.import_array()

BACKEND = "compiled"


def weighted_sinsq_curve(double[::1] omega, double[::1] weight, double[::1] times):
    """sum_k weight[k] * sin^2(omega[k] * t / 2) on the given time grid."""
    cdef Py_ssize_t K = omega.shape[0]
    cdef Py_ssize_t T = times.shape[0]
    out_arr = np.zeros(T)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, t
    cdef double s, half_om
    for k in range(K):
        half_om = 0.5 * omega[k]
        for t in range(T):
            s = sin(half_om * times[t])
            out[t] += weight[k] * s * s
    return out_arr


def ms_rhs(cnp.ndarray[cnp.complex128_t, ndim=2] rho, Py_ssize_t n_levels,
           double g1, double g2, double cos_dt, double sin_dt, double rate):
    """Lindblad RHS for H = (g1 sx1 + g2 sx2)(a e^{-i d t} + a+ e^{i d t})
    plus rate * (D[a] + D[a+]). Layout: index = spin * n_levels + n with
    spin = 2*q1 + q2."""
    cdef Py_ssize_t N1 = n_levels
    cdef Py_ssize_t dim = 4 * N1
    out_arr = np.empty((dim, dim), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex[:, ::1] r = rho
    cdef double complex c = cos_dt - 1j * sin_dt
    cdef double complex cb = cos_dt + 1j * sin_dt
    cdef int[4] f1
    cdef int[4] f2
    f1[0] = 2; f1[1] = 3; f1[2] = 0; f1[3] = 1
    f2[0] = 1; f2[1] = 0; f2[2] = 3; f2[3] = 2

    sq_arr = np.sqrt(np.arange(N1 + 1, dtype=float))
    cdef double[::1] sq = sq_arr

    cdef Py_ssize_t s, t, n, m, I, J, b1, b2, d1, d2
    cdef double complex acc, hl, hr
    cdef double complex mi = -1j

    for s in range(4):
        b1 = f1[s] * N1
        b2 = f2[s] * N1
        for t in range(4):
            d1 = f1[t] * N1
            d2 = f2[t] * N1
            for n in range(N1):
                I = s * N1 + n
                for m in range(N1):
                    J = t * N1 + m
                    # H rho: c sqrt(n+1) (mix)[n+1, m] + cb sqrt(n) (mix)[n-1, m]
                    hl = 0
                    if n + 1 < N1:
                        hl = hl + c * sq[n + 1] * (g1 * r[b1 + n + 1, J] + g2 * r[b2 + n + 1, J])
                    if n >= 1:
                        hl = hl + cb * sq[n] * (g1 * r[b1 + n - 1, J] + g2 * r[b2 + n - 1, J])
                    # rho H: c sqrt(m) (mix)[n, m-1] + cb sqrt(m+1) (mix)[n, m+1]
                    hr = 0
                    if m >= 1:
                        hr = hr + c * sq[m] * (g1 * r[I, d1 + m - 1] + g2 * r[I, d2 + m - 1])
                    if m + 1 < N1:
                        hr = hr + cb * sq[m + 1] * (g1 * r[I, d1 + m + 1] + g2 * r[I, d2 + m + 1])
                    acc = mi * (hl - hr)
                    if rate > 0.0:
                        # dissipator acts on motional indices only: stays in-block
                        if n + 1 < N1 and m + 1 < N1:
                            acc = acc + rate * sq[n + 1] * sq[m + 1] * r[I + 1, J + 1]
                        if n >= 1 and m >= 1:
                            acc = acc + rate * sq[n] * sq[m] * r[I - 1, J - 1]
                        acc = acc - rate * (n + m + 1.0) * r[I, J]
                    out[I, J] = acc
    return out_arr
