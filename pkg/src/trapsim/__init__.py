"""Surface-trap ion physics toolkit.

Analytic electrostatics for rectangular-electrode traps, micromotion-based
stray-field calibration, thermal Raman dynamics (carrier/sideband flopping,
sideband cooling, heating), and exact two-qubit entangling-gate simulation
with curve fitting throughout.
"""

from .backend import backend_name
from .cooling import (BSB, CARRIER, RSB, HeatingFit, HeatingRate,
                      PulseSchedule, SidebandPulse, apply_bsb_pulse,
                      apply_pulse, apply_rsb_pulse, evolve_heating,
                      fit_heating_rate, heating_curve, run_schedule,
                      sideband_ratio_nbar)
from .core import (AMU, HBAR, QE, ConfigError, DriveParams, FitError,
                   IonSpecies, ModeSpec, PhononDistribution, RamanGeometry,
                   TrapsimError, TruncationError, ValidationError, YB171,
                   ground_state, lamb_dicke, tail_n_max, thermal_pmf,
                   zero_point_spread)
from .fitkit import (FitResult, LineFit, bessel_j, laguerre_sweep, linear_fit,
                     lm_fit, seeded_rng)
from .integrate import solve_rk45
from .msgate import (ConfusionMatrix, MSFitResult, MSGateParams,
                     PopulationCurve, apply_confusion, fit_ms,
                     ms_closed_form, propagate)
from .rabi import (dw_table, fit_nbar, matrix_element, rabi_curve,
                   sideband_spectrum)
from .scan import (MonitorPoint, OffsetFitResult, ScanRecord, ScanSetup,
                   StrayFieldTrajectory, carrier_p1, fit_offset,
                   modulation_index, monitor_series, simulate_scan)
from .trap import (ElectrodePatch, TrapLayout, TrapOperatingPoint,
                   compensation_gain, dc_field, dc_potential, default_layout,
                   displacement_from_field, field, layout_from_dict,
                   potential, pseudopotential, rf_field_amplitude,
                   rf_null_and_frequencies, total_energy)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
