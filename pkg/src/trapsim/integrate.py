"""Embedded Dormand-Prince 5(4) integrator with adaptive steps.

One integrator serves both the phonon master equation and the gate
propagator, so step-control behavior is identical everywhere it matters.
Works on real or complex 1-d state vectors.
"""

from __future__ import annotations

import numpy as np

from .core import TrapsimError

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B5 - _B4


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean(np.abs(err / scale) ** 2)))


def _initial_step(rhs, t0, y0, f0, direction, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = float(np.sqrt(np.mean(np.abs(y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean(np.abs(f0 / scale) ** 2)))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = rhs(t0 + h0 * direction, y1)
    d2 = float(np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


def solve_rk45(rhs, t_span, y0, rtol=1e-9, atol=1e-12, t_eval=None,
               max_step=np.inf, max_steps=10_000_000):
    """Integrate dy/dt = rhs(t, y) over t_span, returning values at t_eval.

    t_eval defaults to the endpoint only. Steps are clipped to land exactly
    on each requested output time, so results are deterministic for a given
    input. Raises TrapsimError on step-size underflow.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    y = np.asarray(y0).astype(complex if np.iscomplexobj(y0) else float).copy()
    if t_eval is None:
        t_eval = np.array([t1])
    else:
        t_eval = np.asarray(t_eval, dtype=float)
        if t_eval.size and (t_eval.min() < min(t0, t1) - 1e-15 or
                            t_eval.max() > max(t0, t1) + 1e-15):
            raise TrapsimError("t_eval outside integration span")
    out = np.empty((t_eval.size,) + y.shape, dtype=y.dtype)
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)

    # serve any output times equal to t0 before stepping
    idx = 0
    while idx < t_eval.size and abs(t_eval[idx] - t0) <= 1e-18 + 1e-15 * span:
        out[idx] = y
        idx += 1

    if span == 0.0:
        for k in range(idx, t_eval.size):
            out[k] = y
        return out

    t = t0
    f = rhs(t, y)
    h = min(_initial_step(rhs, t, y, f, direction, rtol, atol), max_step, span)
    k = np.empty((7,) + y.shape, dtype=y.dtype)
    n_steps = 0
    while idx < t_eval.size:
        target = t_eval[idx]
        h = min(h, abs(target - t))
        if h <= abs(t) * 1e-16 + 1e-300:
            raise TrapsimError("step size underflow in rk45", t=t)
        k[0] = f
        for s in range(1, 7):
            ts = t + _C[s] * h * direction
            ys = y + h * direction * np.tensordot(_A[s], k[:s], axes=(0, 0))
            k[s] = rhs(ts, ys)
        y_new = y + h * direction * np.tensordot(_B5, k, axes=(0, 0))
        err = h * np.tensordot(_E, k, axes=(0, 0))
        enorm = _error_norm(err, y, y_new, rtol, atol)
        if enorm <= 1.0:
            t = t + h * direction
            y = y_new
            f = k[6]  # FSAL: last stage is rhs at the new point
            if abs(t - target) <= 1e-18 + 1e-15 * span:
                out[idx] = y
                idx += 1
                while idx < t_eval.size and abs(t_eval[idx] - t) <= 1e-18 + 1e-15 * span:
                    out[idx] = y
                    idx += 1
            factor = 5.0 if enorm == 0.0 else min(5.0, max(0.2, 0.9 * enorm ** -0.2))
        else:
            factor = max(0.2, 0.9 * enorm ** -0.2)
        h = min(h * factor, max_step)
        n_steps += 1
        if n_steps > max_steps:
            raise TrapsimError("rk45 exceeded the step budget", t=t)
    return out
