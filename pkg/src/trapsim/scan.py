"""Stray-field scans: what a compensation-voltage sweep does to the carrier,
and how to invert it.

A vertical stray field displaces the ion off the rf null, the resulting
driven micromotion phase-modulates a perpendicular probe beam, and the
carrier Rabi frequency picks up a J0(beta) factor. Scanning an applied
compensation field traces out P1 vs applied field; the pattern peaks exactly
where the applied field cancels the stray field, which is what fit_offset
extracts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (DriveParams, IonSpecies, ModeSpec, RamanGeometry,
                   ValidationError)
from .fitkit import FitResult, bessel_j, lm_fit, seeded_rng
from .rabi import rabi_curve
from .trap import displacement_from_field


@dataclass(frozen=True)
class StrayFieldTrajectory:
    """Vertical stray field E_y as a function of lab time."""

    fn: Callable[[float], float]

    def e_y(self, t: float) -> float:
        return float(self.fn(t))

    @classmethod
    def constant(cls, e_y: float) -> "StrayFieldTrajectory":
        return cls(fn=lambda t: e_y)

    @classmethod
    def step_saturation(cls, t0: float, amplitude: float, tau: float,
                        baseline: float = 0.0) -> "StrayFieldTrajectory":
        """baseline before t0, then baseline + amplitude (1 - exp(-(t-t0)/tau)).

        The usual charging signature: a step that saturates exponentially.
        """
        if tau <= 0:
            raise ValidationError("tau must be positive", tau=tau)

        def f(t):
            if t < t0:
                return baseline
            return baseline + amplitude * (1.0 - math.exp(-(t - t0) / tau))

        return cls(fn=f)

    @classmethod
    def from_samples(cls, times, values) -> "StrayFieldTrajectory":
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.size != values.size or times.size < 2:
            raise ValidationError("need matching sample arrays of length >= 2")

        def f(t):
            return float(np.interp(t, times, values))

        return cls(fn=f)


@dataclass(frozen=True)
class ScanSetup:
    """Physics context tying applied volts to carrier response.

    gain converts the probe-pair voltage to vertical field (V/m per V);
    mode is the vertical radial mode the displacement happens along;
    mathieu_q sets the micromotion amplitude per unit displacement.
    """

    species: IonSpecies
    geometry: RamanGeometry
    mode: ModeSpec
    mathieu_q: float
    gain: float
    # modes whose thermal motion rescales the carrier; defaults to (mode,)
    dw_modes: tuple = ()

    def __post_init__(self):
        if not (self.mathieu_q > 0):
            raise ValidationError("mathieu_q must be positive")
        if self.gain == 0:
            raise ValidationError("gain must be nonzero")
        object.__setattr__(self, "dw_modes", tuple(self.dw_modes))


def modulation_index(delta_k: float, mathieu_q: float,
                     displacement_m: float) -> float:
    """Micromotion modulation index beta = |dk| (q/2) |dy|."""
    return abs(delta_k) * 0.5 * abs(mathieu_q) * abs(displacement_m)


def carrier_p1(beta: float, drive: DriveParams, geometry: RamanGeometry,
               modes=(), distributions=()) -> float:
    """Carrier excitation probability with micromotion index beta.

    The carrier Rabi frequency is scaled by |J0(beta)|; thermal coupling
    factors from the given mode distributions apply on top.
    """
    j0 = abs(float(bessel_j(0, beta)))
    scaled = DriveParams(rabi_hz=drive.rabi_hz * j0,
                         duration_s=drive.duration_s,
                         detuning_hz=drive.detuning_hz)
    p = rabi_curve(np.array([drive.duration_s]), scaled, geometry,
                   list(modes), list(distributions))
    return float(p[0])


@dataclass
class ScanRecord:
    """One compensation sweep: the applied-voltage grid and measured P1."""

    timestamp_s: float
    delta_v: np.ndarray | None
    delta_e: np.ndarray | None
    p1: np.ndarray
    shots: int | None
    pulse: DriveParams
    gain: float | None = None

    def __post_init__(self):
        if (self.delta_v is None) == (self.delta_e is None):
            raise ValidationError(
                "exactly one of delta_v / delta_e must be populated")
        axis = self.delta_v if self.delta_v is not None else self.delta_e
        axis = np.asarray(axis, dtype=float)
        p1 = np.asarray(self.p1, dtype=float)
        if axis.shape != p1.shape or axis.ndim != 1:
            raise ValidationError("scan axis and p1 must be 1-d and matched")
        if np.any((p1 < -1e-12) | (p1 > 1 + 1e-12)):
            raise ValidationError("p1 outside [0, 1]")
        if self.shots is not None and self.shots <= 0:
            raise ValidationError("shots must be positive or None")
        if self.delta_v is not None:
            self.delta_v = axis
        else:
            self.delta_e = axis
        self.p1 = np.clip(p1, 0.0, 1.0)

    def delta_e_axis(self) -> np.ndarray:
        """Scan axis in field units, converting volts via gain if needed."""
        if self.delta_e is not None:
            return self.delta_e
        if self.gain is None:
            raise ValidationError(
                "record holds volts but no gain to convert to field")
        return self.delta_v * self.gain


def simulate_scan(setup: ScanSetup, trajectory: StrayFieldTrajectory,
                  grid_volts, pulse: DriveParams, shots=None, seed=0,
                  time_s: float = 0.0, distributions=()) -> ScanRecord:
    """Run one sweep of the probe-pair voltage at lab time time_s.

    shots=None returns exact probabilities; an integer draws binomial
    counts with a generator derived from (seed, sweep time index).
    """
    grid_volts = np.asarray(grid_volts, dtype=float)
    e_stray = trajectory.e_y(time_s)
    p = np.empty(grid_volts.size)
    for i, dv in enumerate(grid_volts):
        e_net = e_stray + setup.gain * dv
        dy = displacement_from_field(setup.species, setup.mode.frequency_hz, e_net)
        beta = modulation_index(setup.geometry.delta_k, setup.mathieu_q, dy)
        dw_modes = setup.dw_modes or (setup.mode,)
        p[i] = carrier_p1(beta, pulse, setup.geometry,
                          modes=dw_modes if distributions else (),
                          distributions=distributions)
    if shots is not None:
        rng = seeded_rng(seed, int(round(time_s * 1e9)) & 0x7FFFFFFF)
        k = rng.binomial(int(shots), p)
        p = k / float(shots)
    return ScanRecord(timestamp_s=time_s, delta_v=grid_volts, delta_e=None,
                      p1=p, shots=None if shots is None else int(shots),
                      pulse=pulse, gain=setup.gain)


@dataclass
class OffsetFitResult:
    """Inverted scan: where the pattern peaks and how well."""

    delta_e_fit: float           # applied field at exact cancellation
    e_y_estimate: float          # stray-field estimate, = -delta_e_fit
    sigma: float                 # 1-sigma uncertainty on both of the above
    amplitude: float
    baseline: float
    scale: float                 # beta per unit applied field
    chi2_red: float
    fit: FitResult

    def to_dict(self):
        return {
            "delta_e_fit_vpm": self.delta_e_fit,
            "e_y_estimate_vpm": self.e_y_estimate,
            "sigma_vpm": self.sigma,
            "amplitude": self.amplitude,
            "baseline": self.baseline,
            "scale_m_per_v": self.scale,
            "chi2_red": self.chi2_red,
        }


def _scan_model(params, de):
    amp, base, s, de0 = params
    j0 = bessel_j(0, s * (de - de0))
    return amp * np.sin(0.5 * math.pi * j0) ** 2 + base


def fit_offset(record: ScanRecord, scale_guess: float | None = None) -> OffsetFitResult:
    """Fit P1(dE) = A sin^2((pi/2) J0(s (dE - dE_fit))) + B.

    The peak position dE_fit is where the applied field exactly cancels the
    stray field, so the stray-field estimate is -dE_fit. Works on records in
    volts as long as the gain is attached. A (scale, center) template sweep
    precedes the least-squares polish because coarsely sampled side lobes
    alias, leaving false chi2 minima that trap a single-start fit.
    """
    de = record.delta_e_axis()
    p1 = record.p1
    if de.size < 5:
        raise ValidationError("scan too short to fit", points=int(de.size))
    span = float(np.ptp(p1))
    if span < 1e-3:
        raise ValidationError("scan has no contrast to fit", p1_span=span)

    i_max = int(np.argmax(p1))
    de0 = float(de[i_max])
    amp0 = span
    base0 = float(np.min(p1))
    if scale_guess is None:
        # half-maximum crossing: sin^2((pi/2) J0) = 1/2 at J0 = 1/2, i.e.
        # |s w| ~ 1.520 (first J0 = 0.5 crossing)
        half = base0 + 0.5 * amp0
        above = p1 >= half
        w = None
        for j in range(i_max, de.size):
            if not above[j]:
                w = abs(de[j] - de0)
                break
        if w is None:
            for j in range(i_max, -1, -1):
                if not above[j]:
                    w = abs(de[j] - de0)
                    break
        w = w or max(abs(float(np.ptp(de))) / 4.0, 1e-9)
        scale_guess = 1.520 / w

    # Coarse scans alias the outer side lobes, which leaves a good-looking
    # but wrong chi2 minimum with an inflated scale and a shifted center.
    # Sweep (scale, center) over a template grid so LM starts in the right
    # basin; the wrong basins misalign the central lobe and lose the sweep.
    lobe = 2.405 / scale_guess
    s_cands = scale_guess * np.exp(np.linspace(-1.1, 1.1, 25))
    d_cands = de0 + np.linspace(-lobe, lobe, 81)
    x = s_cands[:, None, None] * (de[None, None, :] - d_cands[None, :, None])
    tpl = amp0 * np.sin(0.5 * math.pi * bessel_j(0, x)) ** 2 + base0
    resid = tpl - p1[None, None, :]
    c2 = np.einsum("sdt,sdt->sd", resid, resid)
    i, j = np.unravel_index(int(np.argmin(c2)), c2.shape)
    p0 = np.array([amp0, base0, float(s_cands[i]), float(d_cands[j])])
    lo = np.array([1e-6, -0.2, scale_guess / 50.0, de.min() - np.ptp(de)])
    hi = np.array([1.5, 0.9, scale_guess * 50.0, de.max() + np.ptp(de)])

    if record.shots is None:
        sigma = None
    else:
        k = p1 * record.shots
        smooth = (k + 0.5) / (record.shots + 1.0)
        sigma = np.sqrt(smooth * (1.0 - smooth) / record.shots)

    res = lm_fit(_scan_model, de, p1, p0, sigma=sigma, bounds=(lo, hi),
                 absolute_sigma=sigma is not None)
    amp, base, s, de_fit = res.params
    return OffsetFitResult(delta_e_fit=float(de_fit),
                           e_y_estimate=float(-de_fit),
                           sigma=float(res.sigmas[3]),
                           amplitude=float(amp), baseline=float(base),
                           scale=float(s), chi2_red=res.chi2_red, fit=res)


@dataclass
class MonitorPoint:
    timestamp_s: float
    e_y_estimate: float
    sigma: float
    chi2_red: float

    def to_dict(self):
        return {"t": self.timestamp_s, "e_y_estimate": self.e_y_estimate,
                "sigma": self.sigma, "chi2red": self.chi2_red}


def monitor_series(records) -> list[MonitorPoint]:
    """Fit every sweep of a time series and return the stray-field track."""
    out = []
    for rec in records:
        r = fit_offset(rec)
        out.append(MonitorPoint(timestamp_s=rec.timestamp_s,
                                e_y_estimate=r.e_y_estimate,
                                sigma=r.sigma, chi2_red=r.chi2_red))
    return out
