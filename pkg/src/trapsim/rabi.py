"""Carrier and sideband dynamics of a Raman-driven ion with thermal motion.

Everything reduces to sums of sin^2 terms over joint Fock occupations,
weighted by Debye-Waller style coupling factors. The factors use the exact
generalized-Laguerre matrix elements, valid at any eta and any n.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np

from .backend import kernels
from .core import (DriveParams, PhononDistribution, RamanGeometry,
                   ValidationError, tail_n_max, thermal_pmf)
from .fitkit import FitResult, laguerre_sweep, lm_fit

_WEIGHT_PRUNE = 1e-14


def matrix_element(n: int, s: int, eta: float) -> float:
    """|<n+s| exp(i eta (a + a+)) |n>|, the sideband coupling strength.

    Returns 0 when the target level n+s would be negative. The absolute
    value matters: the Laguerre polynomial oscillates in sign at large n and
    only the magnitude enters Rabi frequencies.
    """
    if n < 0:
        raise ValidationError("n must be >= 0", n=n)
    if n + s < 0:
        return 0.0
    # bucket the table size so repeated scalar lookups share cache entries
    m = 63
    while m < n:
        m = 2 * m + 1
    return float(dw_table(eta, s, m)[n])


@lru_cache(maxsize=256)
def _dw_table_cached(eta: float, s: int, n_max: int):
    a = abs(s)
    x = eta * eta
    lag = np.abs(laguerre_sweep(a, x, n_max))
    # eta^a sqrt(n_min! / n_max!) = eta^a / sqrt((n+1)(n+2)...(n+a))
    n = np.arange(n_max + 1, dtype=float)
    if a == 0:
        ratio = np.ones(n_max + 1)
    else:
        # cumulative log product of the a factors above each n
        logs = np.log(np.arange(1, n_max + a + 1, dtype=float))
        csum = np.concatenate([[0.0], np.cumsum(logs)])
        # product_{k=n+1}^{n+a} k = (n+a)! / n!
        logprod = csum[np.arange(a, n_max + a + 1)] - csum[np.arange(0, n_max + 1)]
        ratio = eta ** a * np.exp(-0.5 * logprod)
    table = math.exp(-0.5 * x) * ratio * lag
    if s >= 0:
        out = table
    else:
        # |<n-s'|...|n>| with s' = |s|: zero below n = |s|, then the n_min = n - |s| form
        out = np.zeros(n_max + 1)
        if n_max >= a:
            out[a:] = table[: n_max - a + 1]
    out.setflags(write=False)
    return out


def dw_table(eta: float, s: int, n_max: int) -> np.ndarray:
    """Coupling factors |<n+s| e^{i eta (a+a+)} |n>| for n = 0..n_max."""
    if eta == 0.0:
        out = np.ones(n_max + 1) if s == 0 else np.zeros(n_max + 1)
        return out
    return _dw_table_cached(float(eta), int(s), int(n_max))


def _effective_etas(geometry: RamanGeometry, modes) -> list[float]:
    if geometry.configuration == "co":
        return [0.0 for _ in modes]
    return [m.lamb_dicke for m in modes]


def _joint_terms(distributions, factors):
    """Outer-product joint weights and coupling products, pruned and flat."""
    w = distributions[0].populations
    d = factors[0]
    for dist, fac in zip(distributions[1:], factors[1:]):
        w = np.multiply.outer(w, dist.populations).ravel()
        d = np.multiply.outer(d, fac).ravel()
    keep = w > _WEIGHT_PRUNE
    return w[keep], d[keep]


def _sinsq_response(omega, weight, detuning_hz, times):
    """sum w * (O^2/(O^2+D^2)) sin^2(sqrt(O^2+D^2) t / 2) via the kernel."""
    if detuning_hz == 0.0:
        om_eff, amp = omega, weight
    else:
        delta = 2.0 * math.pi * detuning_hz
        om_eff = np.hypot(omega, delta)  # >= |delta| > 0, safe to divide
        amp = weight * (omega / om_eff) ** 2
    return kernels.weighted_sinsq_curve(
        np.ascontiguousarray(om_eff, dtype=float),
        np.ascontiguousarray(amp, dtype=float),
        np.ascontiguousarray(times, dtype=float))


def rabi_curve(times, drive: DriveParams, geometry: RamanGeometry,
               modes, distributions) -> np.ndarray:
    """Excitation probability P1(t) for carrier flopping with motional
    dephasing from the given phonon distributions.

    times in seconds; one distribution per mode. Copropagating geometry
    gives the undamped sinusoid regardless of the distributions.
    """
    if len(modes) != len(distributions):
        raise ValidationError("need one distribution per mode",
                              modes=len(modes), distributions=len(distributions))
    times = np.asarray(times, dtype=float)
    etas = _effective_etas(geometry, modes)
    if not modes:
        om = 2.0 * math.pi * drive.rabi_hz
        return _sinsq_response(np.array([om]), np.array([1.0]),
                               drive.detuning_hz, times)
    factors = [dw_table(eta, 0, dist.n_max)
               for eta, dist in zip(etas, distributions)]
    w, d = _joint_terms(distributions, factors)
    omega = 2.0 * math.pi * drive.rabi_hz * d
    return _sinsq_response(omega, w, drive.detuning_hz, times)


def sideband_spectrum(detunings_hz, drive: DriveParams, geometry: RamanGeometry,
                      modes, distributions, orders: int = 2) -> np.ndarray:
    """P1 versus Raman detuning from the carrier.

    Includes the carrier and sidebands up to `orders` for each mode, each
    treated as an independent two-level channel with its thermally averaged
    coupling; channels combine as P = 1 - prod(1 - P_channel) so the result
    stays in [0, 1].
    """
    detunings_hz = np.asarray(detunings_hz, dtype=float)
    etas = _effective_etas(geometry, modes)
    tables = {}
    for i, (eta, dist) in enumerate(zip(etas, distributions)):
        for s in range(-orders, orders + 1):
            tables[(i, s)] = dw_table(eta, s, dist.n_max)

    transitions = [(None, 0, 0.0)]  # carrier
    for i, mode in enumerate(modes):
        for s in range(-orders, orders + 1):
            if s == 0:
                continue
            transitions.append((i, s, s * mode.frequency_hz))

    t = drive.duration_s
    one_minus = np.ones_like(detunings_hz)
    for (mode_idx, s, offset_hz) in transitions:
        factors = []
        for i in range(len(modes)):
            factors.append(tables[(i, s)] if i == mode_idx else tables[(i, 0)])
        if modes:
            w, d = _joint_terms(distributions, factors)
        else:
            w, d = np.array([1.0]), np.array([1.0])
        omega = 2.0 * math.pi * drive.rabi_hz * d
        delta = 2.0 * math.pi * (detunings_hz - offset_hz)
        om_eff = np.sqrt(omega[:, None] ** 2 + delta[None, :] ** 2)
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(om_eff > 0, (omega[:, None] / np.where(om_eff > 0, om_eff, 1.0)) ** 2, 1.0)
        p_chan = np.sum(w[:, None] * frac * np.sin(0.5 * om_eff * t) ** 2, axis=0)
        one_minus *= 1.0 - p_chan
    return 1.0 - one_minus


def fit_nbar(times, p1, drive_guess: DriveParams, geometry: RamanGeometry,
             modes, shots=None, nbar_guess=None, max_nbar=300.0) -> FitResult:
    """Fit thermal occupations (and the Rabi frequency) to a flopping curve.

    Parameters are (rabi_hz, log(nbar_i + 1e-6)) internally; the returned
    FitResult carries decoded values in extras["nbar"] / extras["nbar_sigma"]
    and extras["rabi_hz"]. shots scales the binomial uncertainties; None
    means expectation-value data with unit weights.

    Near-equal Lamb-Dicke factors make the split between the modes poorly
    identifiable; that triggers a warning, and the sum of the occupations is
    still well constrained.
    """
    times = np.asarray(times, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    etas = _effective_etas(geometry, modes)
    if len(modes) not in (1, 2):
        raise ValidationError("fit supports one or two modes", modes=len(modes))
    if len(etas) == 2 and max(etas) > 0:
        if abs(etas[0] - etas[1]) < 0.05 * max(etas):
            warnings.warn(
                "Lamb-Dicke factors differ by <5%: individual nbar values are "
                "poorly identifiable, trust their sum", stacklevel=2)
    if min(etas) == 0.0 and geometry.configuration != "co":
        raise ValidationError("zero Lamb-Dicke factor in a counter-propagating fit")
    if np.ptp(p1) < 1e-3:
        raise ValidationError("flat curve carries no rate information",
                              p1_span=float(np.ptp(p1)))

    eps = 1e-6
    if nbar_guess is None:
        nbar_guess = [5.0] * len(modes)
    p0 = np.array([drive_guess.rabi_hz] + [math.log(nb + eps) for nb in nbar_guess])
    lo = np.array([1.0] + [math.log(eps)] * len(modes))
    hi = np.array([np.inf] + [math.log(max_nbar + eps)] * len(modes))

    if shots is None:
        sigma = None
    else:
        k = np.asarray(p1) * shots
        smooth = (k + 0.5) / (shots + 1.0)
        sigma = np.sqrt(smooth * (1.0 - smooth) / shots)

    def model(params, t):
        rabi = params[0]
        dists = []
        for u in params[1:]:
            nb = math.exp(u) - eps
            dists.append(thermal_pmf(max(nb, 0.0), tol=1e-6))
        drv = DriveParams(rabi_hz=rabi, duration_s=float(t[-1]),
                          detuning_hz=drive_guess.detuning_hz)
        return rabi_curve(t, drv, geometry, modes, dists)

    res = lm_fit(model, times, p1, p0, sigma=sigma, bounds=(lo, hi),
                 absolute_sigma=shots is not None)
    nbars = np.exp(res.params[1:]) - eps
    nbar_sigma = np.exp(res.params[1:]) * res.sigmas[1:]
    res.extras["rabi_hz"] = float(res.params[0])
    res.extras["rabi_sigma_hz"] = float(res.sigmas[0])
    res.extras["nbar"] = [float(v) for v in nbars]
    res.extras["nbar_sigma"] = [float(v) for v in nbar_sigma]
    return res
