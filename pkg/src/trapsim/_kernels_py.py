"""Pure numpy implementations of the hot kernels.

Same call signatures as the compiled extension; selected by backend.py when
the extension is unavailable or disabled.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

# spin-flip index maps for |q1 q2>: s = 2*q1 + q2
_FLIP1 = np.array([2, 3, 0, 1])  # sigma_x on qubit 1
_FLIP2 = np.array([1, 0, 3, 2])  # sigma_x on qubit 2


def weighted_sinsq_curve(omega, weight, times):
    """sum_k weight[k] * sin^2(omega[k] * t / 2) evaluated on times.

    omega in rad/s. Chunked over k to bound the temporary size.
    """
    omega = np.asarray(omega, dtype=float)
    weight = np.asarray(weight, dtype=float)
    times = np.asarray(times, dtype=float)
    out = np.zeros(times.size)
    chunk = max(1, 2_000_000 // max(times.size, 1))
    for start in range(0, omega.size, chunk):
        om = omega[start:start + chunk]
        w = weight[start:start + chunk]
        s = np.sin(np.multiply.outer(om, times) * 0.5)
        out += w @ (s * s)
    return out


def ms_rhs(rho, n_levels, g1, g2, cos_dt, sin_dt, rate):
    """Lindblad right-hand side for the bichromatic spin-dependent force.

    rho is the (4*n_levels, 4*n_levels) density matrix over
    |q1 q2> x |n>; H = (g1 sx1 + g2 sx2) (a e^{-i d t} + a+ e^{+i d t})
    with e^{-i d t} = cos_dt - i sin_dt, and a heating dissipator
    rate * (D[a] + D[a+]).
    """
    N1 = n_levels
    R = rho.reshape(4, N1, 4, N1)
    c = cos_dt - 1j * sin_dt
    cb = np.conj(c)
    sq = np.sqrt(np.arange(N1 + 1, dtype=float))

    mix_l = g1 * R[_FLIP1] + g2 * R[_FLIP2]          # spin mixing, left index
    mix_r = g1 * R[:, :, _FLIP1] + g2 * R[:, :, _FLIP2]

    H_rho = np.zeros_like(R)
    # c * (Sx x a) rho : sqrt(n+1) rho[n+1]
    H_rho[:, :-1] += c * sq[1:N1, None, None].reshape(1, N1 - 1, 1, 1) * mix_l[:, 1:]
    # cbar * (Sx x a+) rho : sqrt(n) rho[n-1]
    H_rho[:, 1:] += cb * sq[1:N1].reshape(1, N1 - 1, 1, 1) * mix_l[:, :-1]

    rho_H = np.zeros_like(R)
    # rho (Sx x a): sqrt(m) rho[m-1]
    rho_H[:, :, :, 1:] += c * sq[1:N1].reshape(1, 1, 1, N1 - 1) * mix_r[:, :, :, :-1]
    # rho (Sx x a+): sqrt(m+1) rho[m+1]
    rho_H[:, :, :, :-1] += cb * sq[1:N1].reshape(1, 1, 1, N1 - 1) * mix_r[:, :, :, 1:]

    d = -1j * (H_rho - rho_H)

    if rate > 0.0:
        n_idx = np.arange(N1, dtype=float)
        # a rho a+ and a+ rho a
        d[:, :-1, :, :-1] += rate * np.outer(sq[1:N1], sq[1:N1]).reshape(1, N1 - 1, 1, N1 - 1) * R[:, 1:, :, 1:]
        d[:, 1:, :, 1:] += rate * np.outer(sq[1:N1], sq[1:N1]).reshape(1, N1 - 1, 1, N1 - 1) * R[:, :-1, :, :-1]
        d -= rate * (n_idx[:, None] + n_idx[None, :] + 1.0).reshape(1, N1, 1, N1) * R

    return d.reshape(4 * N1, 4 * N1)
