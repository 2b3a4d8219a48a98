"""Two-qubit Mølmer-Sørensen gate on a single shared motional mode.

Two independent formulations of the same dynamics live here. `propagate`
integrates the full Lindblad master equation in a truncated Fock space and
supports heating during the gate. `ms_closed_form` evaluates the analytic
thermal populations through spin-dependent displacements and geometric
phases; it exists so the integrator has a non-circular check. A detection
confusion map and a five-parameter curve fit sit on top.

Conventions (fixed here, used consistently by both routes): the coupling is
H(t) = (hbar eta Omega_i / 2) sigma_x^(i) (a e^{-i delta t} + a+ e^{+i delta t})
summed over the two ions, with delta = 2 pi * detuning_hz. Populations are
even in the sign of delta, so a fitted detuning keeps the sign of its
initial guess.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .backend import kernels
from .core import (FitError, ModeSpec, TrapsimError, TruncationError,
                   ValidationError, thermal_pmf)
from .fitkit import FitResult, lm_fit
from .integrate import solve_rk45

# density-matrix workspace cap: state plus integrator stages
_MEMORY_BUDGET_BYTES = 2_000_000_000
_WORKSPACE_FACTOR = 12

# sigma_x eigenvalue pairs (s1, s2) indexing the closed-form branches
_SX_BRANCHES = ((1, 1), (1, -1), (-1, 1), (-1, -1))
# rows: qubit outcomes 00, 01, 10, 11; columns: the branches above
_V = np.array([[1, 1, 1, 1],
               [1, -1, 1, -1],
               [1, 1, -1, -1],
               [1, -1, -1, 1]], dtype=float)


def _as_pair(rabi_hz) -> tuple[float, float]:
    if np.isscalar(rabi_hz):
        return (float(rabi_hz), float(rabi_hz))
    pair = tuple(float(r) for r in rabi_hz)
    if len(pair) != 2:
        raise ValidationError("rabi_hz must be a scalar or a pair",
                              got=len(pair))
    return pair


@dataclass(frozen=True)
class MSGateParams:
    """Bichromatic drive and mode parameters for the entangling gate.

    rabi_hz may be one number (equal illumination) or a per-ion pair.
    detuning_hz is signed, relative to the addressed sideband.
    """

    rabi_hz: tuple[float, float]
    detuning_hz: float
    mode: ModeSpec
    initial_nbar: float = 0.0
    heating_rate_quanta_per_s: float = 0.0
    gate_duration_s: float = 0.0
    n_max: int = 40

    def __post_init__(self):
        object.__setattr__(self, "rabi_hz", _as_pair(self.rabi_hz))
        if min(self.rabi_hz) < 0:
            raise ValidationError("rabi frequencies must be >= 0",
                                  rabi_hz=self.rabi_hz)
        if self.initial_nbar < 0:
            raise ValidationError("initial_nbar must be >= 0")
        if self.heating_rate_quanta_per_s < 0:
            raise ValidationError("heating rate must be >= 0")
        if self.gate_duration_s < 0:
            raise ValidationError("gate duration must be >= 0")
        needed = 10.0 * self.initial_nbar + 20.0
        if self.n_max < needed:
            raise ValidationError(
                f"n_max = {self.n_max} too small for initial_nbar = "
                f"{self.initial_nbar}; need at least {math.ceil(needed)}",
                required_n_max=math.ceil(needed))

    @property
    def couplings_rad(self) -> tuple[float, float]:
        """Per-ion force couplings g_i = eta * (2 pi rabi_i) / 2 in rad/s."""
        eta = self.mode.lamb_dicke
        return tuple(eta * math.pi * r for r in self.rabi_hz)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Per-qubit detection errors: p10 = P(read 1 | true 0),
    p01 = P(read 0 | true 1)."""

    p10: float = 0.0
    p01: float = 0.0

    def __post_init__(self):
        for name in ("p10", "p01"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must be in [0, 1]", value=v)

    def single_qubit_map(self) -> np.ndarray:
        """Column-stochastic 2x2 map from true to measured qubit value."""
        return np.array([[1.0 - self.p10, self.p01],
                         [self.p10, 1.0 - self.p01]])


@dataclass
class PopulationCurve:
    """Joint qubit populations versus time."""

    times_s: np.ndarray
    p00: np.ndarray
    p01: np.ndarray
    p10: np.ndarray
    p11: np.ndarray
    trace: np.ndarray | None = None  # raw density-matrix trace, if tracked

    def __post_init__(self):
        self.times_s = np.asarray(self.times_s, dtype=float)
        cols = []
        for name in ("p00", "p01", "p10", "p11"):
            col = np.asarray(getattr(self, name), dtype=float)
            if col.shape != self.times_s.shape:
                raise ValidationError(f"{name} length does not match times")
            if col.min() < -1e-9 or col.max() > 1.0 + 1e-9:
                raise ValidationError(
                    f"{name} outside [0, 1] beyond tolerance",
                    min=float(col.min()), max=float(col.max()))
            col = np.clip(col, 0.0, 1.0)
            setattr(self, name, col)
            cols.append(col)
        total = cols[0] + cols[1] + cols[2] + cols[3]
        worst = float(np.max(np.abs(total - 1.0)))
        if worst > 1e-9:
            raise ValidationError("populations do not sum to 1",
                                  worst_deviation=worst)

    def stacked(self) -> np.ndarray:
        """(n_times, 4) array in the order p00, p01, p10, p11."""
        return np.column_stack([self.p00, self.p01, self.p10, self.p11])


def _check_memory(n_max: int):
    dim = 4 * (n_max + 1)
    need = _WORKSPACE_FACTOR * dim * dim * 16
    if need > _MEMORY_BUDGET_BYTES:
        raise ValidationError(
            f"n_max = {n_max} needs ~{need / 1e9:.1f} GB of density-matrix "
            f"workspace, over the {_MEMORY_BUDGET_BYTES / 1e9:.0f} GB budget")


def _suggest_n_max(params: MSGateParams, times_s) -> int:
    """Rough Fock-space size for the drive to stay under the truncation cap."""
    g = max(params.couplings_rad)
    delta = 2.0 * math.pi * abs(params.detuning_hz)
    t_end = float(np.max(times_s))
    alpha = 2.0 * g / delta if delta > 0 else g * t_end
    nbar_end = (params.initial_nbar
                + params.heating_rate_quanta_per_s * t_end)
    reach = (alpha + math.sqrt(nbar_end + 1.0)) ** 2
    return max(params.n_max + 5, math.ceil(2.0 * reach + 20.0))


def propagate(params: MSGateParams, times_s) -> PopulationCurve:
    """Integrate the gate master equation and return qubit populations.

    The state is the full two-qubit x Fock density matrix, started in
    |00><00| x thermal(initial_nbar) and evolved under the bichromatic
    spin-dependent force plus, when heating_rate is nonzero, the diffusive
    reservoir dissipator. Populations come from the motional partial trace
    and are normalized by the trace; trace drift beyond 1e-8 or more than
    1e-5 population in the top Fock level is an error.
    """
    times_s = np.asarray(times_s, dtype=float)
    if times_s.ndim != 1 or times_s.size == 0:
        raise ValidationError("times must be a nonempty 1-d sequence")
    if times_s.min() < 0 or np.any(np.diff(times_s) < 0):
        raise ValidationError("times must be nondecreasing and >= 0")
    _check_memory(params.n_max)

    n_levels = params.n_max + 1
    g1, g2 = params.couplings_rad
    delta = 2.0 * math.pi * params.detuning_hz
    rate = params.heating_rate_quanta_per_s

    weights = thermal_pmf(params.initial_nbar, n_max=params.n_max).populations
    rho0 = np.zeros((4 * n_levels, 4 * n_levels), dtype=complex)
    idx = np.arange(n_levels)
    rho0[idx, idx] = weights  # spin block s = 0 is |00>

    def rhs(t, rho):
        ang = delta * t
        return kernels.ms_rhs(rho, n_levels, g1, g2,
                              math.cos(ang), math.sin(ang), rate)

    states = solve_rk45(rhs, (0.0, float(times_s.max())), rho0,
                        rtol=1e-9, atol=1e-13, t_eval=times_s)

    pops = np.empty((times_s.size, 4))
    traces = np.empty(times_s.size)
    top = 0.0
    for k, rho in enumerate(states):
        R = rho.reshape(4, n_levels, 4, n_levels)
        diag = np.einsum("snsn->sn", R).real
        pops[k] = diag.sum(axis=1)
        traces[k] = pops[k].sum()
        top = max(top, float(diag[:, -1].sum()))

    if top > 1e-5:
        raise TruncationError(
            f"population {top:.2e} reached the top Fock level; rerun with "
            f"n_max >= {_suggest_n_max(params, times_s)}",
            suggested_n_max=_suggest_n_max(params, times_s))
    drift = float(np.max(np.abs(traces - 1.0)))
    if drift > 1e-8:
        if rate > 0.0:
            # the reservoir dissipator bleeds population past the cutoff
            # well before the top-level check sees it, so a heated run
            # losing trace means the Fock space was too small
            raise TruncationError(
                f"trace lost {drift:.2e} to the Fock-space cutoff; rerun "
                f"with n_max >= {_suggest_n_max(params, times_s)}",
                suggested_n_max=_suggest_n_max(params, times_s))
        raise TrapsimError("integrator lost trace normalization",
                           trace_drift=drift)
    if pops.min() < -1e-9:
        warnings.warn(f"clamping negative population {pops.min():.2e}",
                      stacklevel=2)
    pops = np.clip(pops, 0.0, None) / traces[:, None]

    return PopulationCurve(times_s, pops[:, 0], pops[:, 1], pops[:, 2],
                           pops[:, 3], trace=traces)


def ms_closed_form(params: MSGateParams, times_s) -> PopulationCurve:
    """Analytic thermal-state populations for the heating-free gate.

    Each sigma_x eigenstate branch m acquires a spin-dependent displacement
    G_m (1 - e^{i delta t}) / delta and a geometric phase
    (G_m/delta)^2 (delta t - sin delta t); thermal averaging contracts the
    branch overlaps by exp(-(G_m - G_m')^2 |alpha|^2 (nbar + 1/2)). The
    qubit populations are quadratic forms of the branch-overlap matrix.
    """
    if params.heating_rate_quanta_per_s != 0.0:
        raise ValidationError(
            "closed form has no heating; use propagate for that")
    times_s = np.asarray(times_s, dtype=float)
    g1, g2 = params.couplings_rad
    delta = 2.0 * math.pi * params.detuning_hz
    G = np.array([s1 * g1 + s2 * g2 for s1, s2 in _SX_BRANCHES])

    t = times_s[:, None]  # (T, 1) against branch axis
    if delta == 0.0:
        disp2 = t ** 2  # |alpha~|^2 with alpha~ = -i t
        phi = np.zeros((times_s.size, 4))
    else:
        dt = delta * t
        disp2 = (2.0 - 2.0 * np.cos(dt)) / delta ** 2
        phi = (G / delta) ** 2 * (dt - np.sin(dt))

    width = (params.initial_nbar + 0.5) * disp2
    Gdiff2 = (G[:, None] - G[None, :]) ** 2
    overlap = np.exp(1j * (phi[:, :, None] - phi[:, None, :])
                     - width[:, :, None] * Gdiff2)
    pops = np.einsum("am,tmn,an->ta", _V, overlap, _V).real / 16.0

    if params.rabi_hz[0] == params.rabi_hz[1]:
        # identical by exchange symmetry; reuse so the equality is exact
        pops[:, 2] = pops[:, 1]
    pops = np.clip(pops, 0.0, 1.0)
    pops /= pops.sum(axis=1, keepdims=True)
    return PopulationCurve(times_s, pops[:, 0], pops[:, 1], pops[:, 2],
                           pops[:, 3])


def apply_confusion(curve: PopulationCurve,
                    cm: ConfusionMatrix) -> PopulationCurve:
    """Map true joint populations through per-qubit detection errors."""
    M = cm.single_qubit_map()
    joint = curve.stacked().reshape(-1, 2, 2)  # axes: time, q1, q2
    measured = np.einsum("ac,bd,tcd->tab", M, M, joint).reshape(-1, 4)
    return PopulationCurve(curve.times_s, measured[:, 0], measured[:, 1],
                           measured[:, 2], measured[:, 3])


@dataclass
class MSFitResult:
    params: MSGateParams
    confusion: ConfusionMatrix
    fit: FitResult

    def to_dict(self):
        s = self.fit.sigmas
        return {"rabi_hz": self.params.rabi_hz[0], "rabi_sigma_hz": s[0],
                "detuning_hz": self.params.detuning_hz,
                "detuning_sigma_hz": s[1],
                "nbar": self.params.initial_nbar, "nbar_sigma": s[2],
                "p10": self.confusion.p10, "p10_sigma": s[3],
                "p01": self.confusion.p01, "p01_sigma": s[4],
                "chi2_red": self.fit.chi2_red, "n_iter": self.fit.n_iter}


def fit_ms(times_s, populations, shots, guess: MSGateParams,
           confusion_guess: ConfusionMatrix | None = None) -> MSFitResult:
    """Fit (rabi, detuning, nbar, p10, p01) to measured population curves.

    populations is (n_times, 4) in the order p00, p01, p10, p11, already
    confusion-affected as measured. The model is propagate followed by
    apply_confusion, with equal illumination of both ions and the heating
    rate held at the guess value. The integrator result is memoized on
    (rabi, detuning, nbar), so confusion-only steps in the Jacobian reuse
    the cached curve.
    """
    times_s = np.asarray(times_s, dtype=float)
    pops = np.asarray(populations, dtype=float)
    if pops.shape != (times_s.size, 4):
        raise ValidationError("populations must be (n_times, 4)",
                              shape=pops.shape)
    if times_s.size < 10:
        raise ValidationError("need at least 10 time points",
                              n_points=times_s.size)
    if float(np.ptp(pops, axis=0).max()) < 0.02:
        raise FitError("population curves have no contrast to fit")

    cm0 = confusion_guess if confusion_guess is not None else ConfusionMatrix()
    nbar_cap = (guess.n_max - 20.0) / 10.0
    if nbar_cap <= guess.initial_nbar:
        raise ValidationError(
            "guess n_max leaves no headroom to vary nbar",
            n_max=guess.n_max, nbar_cap=nbar_cap)

    shots_arr = np.broadcast_to(np.asarray(shots, dtype=float)[..., None],
                                pops.shape)
    phat = (pops * shots_arr + 0.5) / (shots_arr + 1.0)
    sigma = np.sqrt(phat * (1.0 - phat) / shots_arr).ravel()

    cache: dict[tuple, PopulationCurve] = {}

    def model(p, _x):
        rabi, det, nbar, p10, p01 = p
        key = (rabi, det, nbar)
        curve = cache.get(key)
        if curve is None:
            curve = propagate(replace(guess, rabi_hz=(rabi, rabi),
                                      detuning_hz=det, initial_nbar=nbar),
                              times_s)
            cache[key] = curve
        seen = apply_confusion(curve, ConfusionMatrix(p10=p10, p01=p01))
        return seen.stacked().ravel()

    p0 = np.array([guess.rabi_hz[0], guess.detuning_hz, guess.initial_nbar,
                   cm0.p10, cm0.p01])
    lo = np.array([0.0, -np.inf, 0.0, 0.0, 0.0])
    hi = np.array([np.inf, np.inf, nbar_cap, 0.49, 0.49])
    fit = lm_fit(model, times_s, pops.ravel(), p0, sigma=sigma,
                 bounds=(lo, hi), absolute_sigma=True)
    rabi, det, nbar, p10, p01 = fit.params
    return MSFitResult(
        params=replace(guess, rabi_hz=(rabi, rabi), detuning_hz=det,
                       initial_nbar=nbar),
        confusion=ConfusionMatrix(p10=p10, p01=p01),
        fit=fit)
