"""Pulsed sideband cooling and motional heating on classical Fock
populations.

Pulses move population between neighboring Fock levels with sin^2 transfer
probabilities (perfect repump assumed between pulses); heating follows the
thermal-reservoir master equation, integrated with the shared adaptive
stepper. Both operations conserve total probability to machine precision.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import PhononDistribution, ValidationError, tail_n_max
from .fitkit import LineFit, linear_fit
from .integrate import solve_rk45
from .rabi import dw_table

RSB = "RSB"
BSB = "BSB"
CARRIER = "carrier"
_SIDEBANDS = (RSB, BSB, CARRIER)


@dataclass(frozen=True)
class SidebandPulse:
    """One cooling-cycle pulse aimed at a named mode."""

    mode_id: str
    sideband: str
    duration_s: float
    rabi_hz: float

    def __post_init__(self):
        if self.sideband not in _SIDEBANDS:
            raise ValidationError(f"unknown sideband {self.sideband!r}",
                                  allowed=list(_SIDEBANDS))
        if self.duration_s < 0 or self.rabi_hz < 0:
            raise ValidationError("pulse duration and rabi must be >= 0")


@dataclass(frozen=True)
class PulseSchedule:
    pulses: tuple[SidebandPulse, ...]
    repump_after_each: bool = True

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))


@dataclass(frozen=True)
class HeatingRate:
    """Phonon gain rate of a mode, quanta per second. Nonnegative by
    definition; fitted slopes that come out negative live in HeatingFit."""

    quanta_per_s: float

    def __post_init__(self):
        if self.quanta_per_s < 0:
            raise ValidationError("heating rate must be >= 0",
                                  quanta_per_s=self.quanta_per_s)


def _transfer_probs(dist: PhononDistribution, pulse: SidebandPulse,
                    eta: float, s: int) -> np.ndarray:
    table = dw_table(eta, s, dist.n_max)
    omega = 2.0 * math.pi * pulse.rabi_hz * table
    return np.sin(0.5 * omega * pulse.duration_s) ** 2


def apply_rsb_pulse(dist: PhononDistribution, pulse: SidebandPulse,
                    eta: float) -> PhononDistribution:
    """Red-sideband pulse: population flows n -> n-1 with probability
    sin^2(Omega_{n,n-1} t / 2). The ground state is untouched."""
    T = _transfer_probs(dist, pulse, eta, -1)  # T[0] = 0 automatically
    p = dist.populations
    out = p * (1.0 - T)
    out[:-1] += p[1:] * T[1:]
    return PhononDistribution(out)


def apply_bsb_pulse(dist: PhononDistribution, pulse: SidebandPulse,
                    eta: float) -> PhononDistribution:
    """Blue-sideband pulse: n -> n+1. Grows the Fock space by one level so
    nothing falls off the top."""
    ext = dist.extended(dist.n_max + 1)
    T = _transfer_probs(ext, pulse, eta, +1)
    p = ext.populations
    out = p * (1.0 - T)
    out[1:] += p[:-1] * T[:-1]
    return PhononDistribution(out)


def apply_pulse(dist: PhononDistribution, pulse: SidebandPulse,
                eta: float) -> PhononDistribution:
    if pulse.sideband == RSB:
        return apply_rsb_pulse(dist, pulse, eta)
    if pulse.sideband == BSB:
        return apply_bsb_pulse(dist, pulse, eta)
    # carrier: no motional redistribution under perfect repump
    return PhononDistribution(dist.populations.copy())


def run_schedule(dists: dict, schedule: PulseSchedule, etas: dict):
    """Apply a pulse schedule to per-mode distributions.

    dists and etas are keyed by mode_id. Returns (final dists, history),
    history being one {mode_id: nbar} snapshot per applied pulse.
    """
    state = dict(dists)
    history = []
    for pulse in schedule.pulses:
        if pulse.mode_id not in state:
            raise ValidationError(f"schedule pulse targets unknown mode "
                                  f"{pulse.mode_id!r}", known=sorted(state))
        state[pulse.mode_id] = apply_pulse(state[pulse.mode_id], pulse,
                                           etas[pulse.mode_id])
        history.append({mid: state[mid].nbar for mid in state})
    return state, history


def evolve_heating(dist: PhononDistribution, rate: HeatingRate,
                   duration_s: float, rtol: float = 1e-8) -> PhononDistribution:
    """Thermal-reservoir heating for duration_s seconds.

    Master equation dp(n)/dt = ndot [n p(n-1) + (n+1) p(n+1) - (2n+1) p(n)]
    with a closed top boundary (no upward rate out of the last level), so
    the total probability is conserved exactly. The Fock space is extended
    ahead of time to keep the top-bin population negligible.
    """
    if duration_s < 0:
        raise ValidationError("duration must be >= 0")
    ndot = rate.quanta_per_s
    if duration_s == 0.0 or ndot == 0.0:
        return PhononDistribution(dist.populations.copy())

    target_nbar = dist.nbar + ndot * duration_s
    n_needed = tail_n_max(target_nbar, 1e-7) + 10
    work = dist.extended(max(dist.n_max, n_needed))
    n = np.arange(work.n_max + 1, dtype=float)
    up = ndot * (n + 1.0)      # rate n -> n+1
    up[-1] = 0.0               # closed top
    down = ndot * n            # rate n -> n-1

    def rhs(t, p):
        d = -(up + down) * p
        d[1:] += up[:-1] * p[:-1]
        d[:-1] += down[1:] * p[1:]
        return d

    out = solve_rk45(rhs, (0.0, duration_s), work.populations,
                     rtol=rtol, atol=1e-14)[-1]
    out = np.clip(out, 0.0, None)
    return PhononDistribution(out)


def heating_curve(dist: PhononDistribution, rate: HeatingRate, times_s):
    """Mean occupation at each requested delay, evolving incrementally."""
    times_s = np.asarray(times_s, dtype=float)
    if np.any(np.diff(times_s) < 0):
        raise ValidationError("times must be nondecreasing")
    nbars = np.empty(times_s.size)
    current = dist
    t_prev = 0.0
    for i, t in enumerate(times_s):
        if t > t_prev:
            current = evolve_heating(current, rate, t - t_prev)
            t_prev = t
        nbars[i] = current.nbar
    return nbars


def sideband_ratio_nbar(p_rsb: float, p_bsb: float) -> float:
    """Thermal occupation from the sideband ratio: nbar = r / (1 - r).

    Exact for a thermal state probed with equal pulses on both sidebands.
    """
    if p_bsb <= 0:
        raise ValidationError("blue-sideband probability must be positive",
                              p_bsb=p_bsb)
    if p_rsb < 0:
        raise ValidationError("red-sideband probability must be >= 0",
                              p_rsb=p_rsb)
    r = p_rsb / p_bsb
    if r >= 1.0:
        raise ValidationError("sideband ratio >= 1 has no thermal solution",
                              ratio=r)
    return r / (1.0 - r)


@dataclass
class HeatingFit:
    """Fitted heating line nbar(t) = rate * t + nbar0.

    The slope is reported as fitted, including a negative value (with a
    warning); convert to HeatingRate only when feeding a simulation.
    """

    rate_quanta_per_s: float
    rate_sigma: float
    nbar0: float
    nbar0_sigma: float
    chi2_red: float
    line: LineFit

    def to_dict(self):
        return {"rate_quanta_per_s": self.rate_quanta_per_s,
                "rate_sigma": self.rate_sigma,
                "nbar0": self.nbar0, "nbar0_sigma": self.nbar0_sigma,
                "chi2_red": self.chi2_red}


def fit_heating_rate(delays_s, nbars, sigma=None) -> HeatingFit:
    """Weighted line fit to nbar vs delay."""
    fit = linear_fit(delays_s, nbars, sigma=sigma)
    if fit.slope < 0:
        warnings.warn(f"fitted heating rate is negative "
                      f"({fit.slope:.3g} quanta/s); reporting as-is",
                      stacklevel=2)
    return HeatingFit(rate_quanta_per_s=fit.slope, rate_sigma=fit.slope_sigma,
                      nbar0=fit.intercept, nbar0_sigma=fit.intercept_sigma,
                      chi2_red=fit.chi2_red, line=fit)
