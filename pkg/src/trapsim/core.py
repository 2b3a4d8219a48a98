"""Shared types for trapped-ion simulations: species, beam geometry, motional
modes, phonon-number distributions, and the small kinematic helpers everything
else is built on.

Conventions: SI units everywhere, frequencies are ordinary frequencies in Hz
(angular factors of 2*pi live inside the formulas that need them).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HBAR = 1.054571817e-34       # J s
QE = 1.602176634e-19         # C
AMU = 1.66053906660e-27      # kg
YB171_MASS = 170.9363302 * AMU


class TrapsimError(Exception):
    """Base class for physics and configuration errors.

    Carries a machine-readable payload so the command line tool can emit a
    structured error report.
    """

    kind = "error"

    def __init__(self, message, **payload):
        super().__init__(message)
        self.payload = dict(payload)

    def to_json_dict(self):
        d = {"error": self.kind, "message": str(self)}
        d.update(self.payload)
        return d


class ValidationError(TrapsimError):
    kind = "validation"


class TruncationError(TrapsimError):
    kind = "truncation"


class FitError(TrapsimError):
    kind = "fit"


class ConfigError(TrapsimError):
    kind = "config"


@dataclass(frozen=True)
class IonSpecies:
    """A single ion species.

    :param mass_kg: ion mass in kg
    :param charge_c: charge in coulombs (positive for the usual single charge)
    :param label: free-form name, only used in reports
    """

    mass_kg: float
    charge_c: float = QE
    label: str = ""

    def __post_init__(self):
        if not (self.mass_kg > 0):
            raise ValidationError("ion mass must be positive", mass_kg=self.mass_kg)
        if self.charge_c == 0:
            raise ValidationError("ion charge must be nonzero")


YB171 = IonSpecies(mass_kg=YB171_MASS, charge_c=QE, label="171Yb+")

_GEOMETRY_ALIASES = {
    "counter": "counter",
    "counter_propagating": "counter",
    "counter-propagating": "counter",
    "co": "co",
    "co_propagating": "co",
    "co-propagating": "co",
}


@dataclass(frozen=True)
class RamanGeometry:
    """Two-beam Raman geometry.

    configuration is "counter" (beams opposed, momentum kick 2k) or "co"
    (copropagating, no net kick). projection_angles_deg gives the angle
    between the effective wavevector difference and each radial mode axis.
    """

    wavelength_m: float = 355e-9
    configuration: str = "counter"
    projection_angles_deg: tuple[float, float] = (45.0, 45.0)

    def __post_init__(self):
        canon = _GEOMETRY_ALIASES.get(str(self.configuration).lower())
        if canon is None:
            raise ValidationError(
                "unknown beam configuration", configuration=self.configuration
            )
        object.__setattr__(self, "configuration", canon)
        if not (self.wavelength_m > 0):
            raise ValidationError("wavelength must be positive")

    @property
    def delta_k(self):
        """Magnitude of the wavevector difference in 1/m."""
        if self.configuration == "co":
            return 0.0
        return 4.0 * math.pi / self.wavelength_m


@dataclass(frozen=True)
class ModeSpec:
    """One motional mode as seen by one ion: frequency plus the Lamb-Dicke
    factor of that ion's participation."""

    frequency_hz: float
    lamb_dicke: float
    mode_id: str = ""

    def __post_init__(self):
        if not (self.frequency_hz > 0):
            raise ValidationError("mode frequency must be positive",
                                  frequency_hz=self.frequency_hz)
        if self.lamb_dicke < 0:
            raise ValidationError("lamb_dicke must be >= 0",
                                  lamb_dicke=self.lamb_dicke)


@dataclass(frozen=True)
class DriveParams:
    """A square probe pulse: resonant Rabi frequency (Hz), duration (s) and
    detuning from the addressed transition (Hz)."""

    rabi_hz: float
    duration_s: float
    detuning_hz: float = 0.0

    def __post_init__(self):
        if self.rabi_hz < 0:
            raise ValidationError("rabi frequency must be >= 0")
        if self.duration_s < 0:
            raise ValidationError("pulse duration must be >= 0")


def zero_point_spread(species: IonSpecies, frequency_hz: float) -> float:
    """Ground-state wavepacket size sqrt(hbar / (2 m omega)) in meters."""
    if not (frequency_hz > 0):
        raise ValidationError("mode frequency must be positive",
                              frequency_hz=frequency_hz)
    omega = 2.0 * math.pi * frequency_hz
    return math.sqrt(HBAR / (2.0 * species.mass_kg * omega))


def lamb_dicke(species: IonSpecies, geometry: RamanGeometry,
               frequency_hz: float, projection_deg: float = 0.0) -> float:
    """Lamb-Dicke parameter of one mode: |delta_k| cos(theta) x0.

    Zero for copropagating beams regardless of the other arguments.
    """
    dk = geometry.delta_k
    if dk == 0.0:
        return 0.0
    proj = math.cos(math.radians(projection_deg))
    return abs(dk * proj) * zero_point_spread(species, frequency_hz)


def tail_n_max(nbar: float, tol: float = 1e-6) -> int:
    """Smallest Fock cutoff where the thermal occupation p(n_max) drops
    below tol. Never smaller than max(30, ceil(10 nbar))."""
    floor = max(30, math.ceil(10.0 * nbar))
    if nbar <= 0:
        return floor
    r = nbar / (nbar + 1.0)
    # p(n) = r^n / (nbar + 1) < tol
    n = math.log(tol * (nbar + 1.0)) / math.log(r)
    return max(floor, math.ceil(n) + 1)


def _thermal_weights(nbar: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1, dtype=float)
    if nbar == 0.0:
        w = np.zeros(n_max + 1)
        w[0] = 1.0
        return w
    # log form stays finite for large n and large nbar
    logw = n * (math.log(nbar) - math.log(nbar + 1.0)) - math.log(nbar + 1.0)
    return np.exp(logw)


@dataclass
class PhononDistribution:
    """Classical distribution over Fock states 0..n_max.

    populations must be nonnegative and sum to 1 within 1e-9; use
    thermal_pmf / ground_state to construct valid instances.
    """

    populations: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.populations, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValidationError("populations must be a 1-d array")
        if np.any(p < -1e-12):
            raise ValidationError("negative phonon population",
                                  min_value=float(p.min()))
        total = float(p.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValidationError("populations must sum to 1",
                                  total=total)
        self.populations = np.clip(p, 0.0, None)

    @property
    def n_max(self) -> int:
        return self.populations.size - 1

    @property
    def nbar(self) -> float:
        n = np.arange(self.populations.size, dtype=float)
        return float(np.dot(n, self.populations))

    def extended(self, n_max: int) -> "PhononDistribution":
        """Same distribution on a larger Fock space (zero-padded)."""
        if n_max < self.n_max:
            raise ValidationError("cannot shrink a distribution",
                                  n_max=n_max, current=self.n_max)
        p = np.zeros(n_max + 1)
        p[: self.populations.size] = self.populations
        return PhononDistribution(p)


def ground_state(n_max: int = 30) -> PhononDistribution:
    p = np.zeros(n_max + 1)
    p[0] = 1.0
    return PhononDistribution(p)


def thermal_pmf(nbar: float, n_max: int | None = None,
                tol: float = 1e-6) -> PhononDistribution:
    """Thermal (geometric) phonon distribution, renormalized on 0..n_max.

    With n_max omitted the cutoff is chosen so the raw tail term p(n_max)
    is below tol. An explicit n_max that violates that bound raises
    TruncationError naming the smallest acceptable cutoff.
    """
    if nbar < 0:
        raise ValidationError("nbar must be >= 0", nbar=nbar)
    needed = tail_n_max(nbar, tol)
    if n_max is None:
        n_max = needed
    else:
        n_max = int(n_max)
        if n_max < 1:
            raise ValidationError("n_max must be >= 1", n_max=n_max)
        if nbar > 0:
            r = nbar / (nbar + 1.0)
            p_top = math.exp(n_max * math.log(r) - math.log(nbar + 1.0))
            if p_top >= tol:
                raise TruncationError(
                    "n_max too small for requested nbar: thermal tail "
                    f"p(n_max) = {p_top:.3e} >= {tol:.1e}",
                    n_max=n_max, nbar=nbar, suggested_n_max=needed,
                )
    w = _thermal_weights(nbar, n_max)
    w /= w.sum()
    return PhononDistribution(w)
