"""Compensation scans: micromotion carrier model, synthesis, and inversion.

The carrier response is cross-checked against a literal weighted sum built
from scipy.linalg.expm displacement matrix elements, with no shared code.
"""

import math

import numpy as np
import pytest
from scipy import linalg as sci_linalg
from scipy import special as sci_special

from trapsim import (YB171, DriveParams, ScanRecord, ScanSetup,
                     StrayFieldTrajectory, ValidationError, carrier_p1,
                     displacement_from_field, fit_offset, modulation_index,
                     monitor_series, simulate_scan, thermal_pmf)

from conftest import REF_DELTA_K, REF_ETA_211, REF_IDC_GAIN, assert_close


def _pi_pulse(rabi_hz=545e3):
    return DriveParams(rabi_hz=rabi_hz, duration_s=0.5 / rabi_hz)


def _expm_diagonal_factors(eta, dim=160):
    """|<n| exp(i eta (a + a+)) |n>| from a dense matrix exponential."""
    a = np.diag(np.sqrt(np.arange(1, dim)), k=1)
    U = sci_linalg.expm(1j * eta * (a + a.T))
    return np.abs(np.diag(U))


class TestModulationIndex:
    def test_definition(self):
        got = modulation_index(REF_DELTA_K, 0.16, 2.5e-7)
        assert_close(got, REF_DELTA_K * 0.08 * 2.5e-7, rtol=1e-14)

    def test_signs_do_not_matter(self):
        assert modulation_index(1.0, -0.2, -3.0) == \
            modulation_index(1.0, 0.2, 3.0)


class TestCarrierModel:
    def test_motionless_bessel_response(self, counter_geometry):
        pulse = _pi_pulse()
        for beta in (0.0, 0.7, 1.9, 2.404825557695773, 4.0):
            got = carrier_p1(beta, pulse, counter_geometry)
            want = math.sin(0.5 * math.pi
                            * abs(float(sci_special.j0(beta)))) ** 2
            assert_close(got, want, rtol=1e-12, atol=1e-30,
                         label=f"beta={beta}")

    def test_thermal_response_against_expm_sum(self, counter_geometry,
                                               vertical_mode):
        pulse = _pi_pulse()
        dist = thermal_pmf(2.0)
        factors = _expm_diagonal_factors(REF_ETA_211)[: dist.n_max + 1]
        for beta in (0.0, 1.1, 2.0):
            j0 = abs(float(sci_special.j0(beta)))
            omega = 2 * math.pi * pulse.rabi_hz * j0 * factors
            want = float(np.sum(dist.populations
                                * np.sin(0.5 * omega * pulse.duration_s) ** 2))
            got = carrier_p1(beta, pulse, counter_geometry,
                             modes=(vertical_mode,), distributions=(dist,))
            assert_close(got, want, rtol=1e-10, label=f"beta={beta}")

    def test_perfect_pi_pulse_at_null(self, counter_geometry):
        assert_close(carrier_p1(0.0, _pi_pulse(), counter_geometry), 1.0,
                     rtol=1e-12)


class TestSimulateScan:
    def test_noiseless_roundtrip(self, scan_setup):
        grid = np.arange(-3.0, 3.0 + 0.05, 0.1)
        for stray in (150.0, -900.0, 37.5):
            rec = simulate_scan(scan_setup,
                                StrayFieldTrajectory.constant(stray),
                                grid, _pi_pulse(), shots=None)
            fit = fit_offset(rec)
            assert_close(fit.e_y_estimate, stray, atol=1e-5,
                         label=f"stray={stray}")
            assert_close(fit.delta_e_fit, -stray, atol=1e-5)

    def test_peak_sits_at_cancellation(self, scan_setup):
        stray = 150.0
        grid = np.arange(-3.0, 3.0 + 0.05, 0.1)
        rec = simulate_scan(scan_setup, StrayFieldTrajectory.constant(stray),
                            grid, _pi_pulse(), shots=None)
        v_peak = grid[int(np.argmax(rec.p1))]
        # -150 V/m / gain = -0.1135 V, nearest grid point is -0.1 V
        assert abs(v_peak - (-stray / scan_setup.gain)) <= 0.05

    def test_shot_noise_is_deterministic(self, scan_setup):
        grid = np.arange(-0.5, 0.55, 0.05)
        traj = StrayFieldTrajectory.constant(80.0)
        a = simulate_scan(scan_setup, traj, grid, _pi_pulse(), shots=500,
                          seed=4, time_s=10.0)
        b = simulate_scan(scan_setup, traj, grid, _pi_pulse(), shots=500,
                          seed=4, time_s=10.0)
        c = simulate_scan(scan_setup, traj, grid, _pi_pulse(), shots=500,
                          seed=5, time_s=10.0)
        assert np.array_equal(a.p1, b.p1)
        assert not np.array_equal(a.p1, c.p1)
        # counts are integer multiples of 1/shots
        assert np.allclose(a.p1 * 500, np.round(a.p1 * 500), atol=1e-9)

    def test_scan_times_decorrelate(self, scan_setup):
        grid = np.arange(-0.5, 0.55, 0.05)
        traj = StrayFieldTrajectory.constant(80.0)
        a = simulate_scan(scan_setup, traj, grid, _pi_pulse(), shots=500,
                          seed=4, time_s=0.0)
        b = simulate_scan(scan_setup, traj, grid, _pi_pulse(), shots=500,
                          seed=4, time_s=60.0)
        assert not np.array_equal(a.p1, b.p1)

    def test_thermal_scan_uses_dw_modes(self, scan_setup, counter_geometry,
                                        vertical_mode):
        dist = thermal_pmf(3.0)
        rec = simulate_scan(scan_setup, StrayFieldTrajectory.constant(0.0),
                            np.array([0.0]), _pi_pulse(), shots=None,
                            distributions=(dist,))
        want = carrier_p1(0.0, _pi_pulse(), counter_geometry,
                          modes=(vertical_mode,), distributions=(dist,))
        assert_close(rec.p1[0], want, rtol=1e-12)


class TestScanRecord:
    def test_exactly_one_axis(self):
        pulse = _pi_pulse()
        with pytest.raises(ValidationError):
            ScanRecord(timestamp_s=0, delta_v=np.zeros(3),
                       delta_e=np.zeros(3), p1=np.zeros(3), shots=None,
                       pulse=pulse)
        with pytest.raises(ValidationError):
            ScanRecord(timestamp_s=0, delta_v=None, delta_e=None,
                       p1=np.zeros(3), shots=None, pulse=pulse)

    def test_volts_need_gain_for_field_axis(self):
        rec = ScanRecord(timestamp_s=0, delta_v=np.array([0.0, 1.0]),
                         delta_e=None, p1=np.array([0.1, 0.2]), shots=None,
                         pulse=_pi_pulse())
        with pytest.raises(ValidationError):
            rec.delta_e_axis()
        rec.gain = REF_IDC_GAIN
        assert_close(rec.delta_e_axis(), [0.0, REF_IDC_GAIN], rtol=1e-12)

    def test_p1_bounds(self):
        with pytest.raises(ValidationError):
            ScanRecord(timestamp_s=0, delta_v=np.array([0.0]), delta_e=None,
                       p1=np.array([1.5]), shots=None, pulse=_pi_pulse())


class TestFitOffset:
    def test_needs_contrast(self):
        rec = ScanRecord(timestamp_s=0, delta_e=np.linspace(-100, 100, 21),
                         delta_v=None, p1=np.full(21, 0.5), shots=None,
                         pulse=_pi_pulse())
        with pytest.raises(ValidationError):
            fit_offset(rec)

    def test_needs_points(self):
        rec = ScanRecord(timestamp_s=0, delta_e=np.linspace(-1, 1, 3),
                         delta_v=None, p1=np.array([0.1, 0.9, 0.1]),
                         shots=None, pulse=_pi_pulse())
        with pytest.raises(ValidationError):
            fit_offset(rec)

    def test_sigma_shrinks_with_shots(self, scan_setup):
        grid = np.arange(-0.5, 0.55, 0.05)
        traj = StrayFieldTrajectory.constant(50.0)
        lo = fit_offset(simulate_scan(scan_setup, traj, grid, _pi_pulse(),
                                      shots=200, seed=1))
        hi = fit_offset(simulate_scan(scan_setup, traj, grid, _pi_pulse(),
                                      shots=20000, seed=1))
        assert hi.sigma < lo.sigma

    def test_to_dict_keys(self, scan_setup):
        grid = np.arange(-1.0, 1.05, 0.1)
        rec = simulate_scan(scan_setup, StrayFieldTrajectory.constant(10.0),
                            grid, _pi_pulse(), shots=None)
        d = fit_offset(rec).to_dict()
        assert set(d) == {"delta_e_fit_vpm", "e_y_estimate_vpm", "sigma_vpm",
                          "amplitude", "baseline", "scale_m_per_v",
                          "chi2_red"}


class TestTrajectoryAndMonitor:
    def test_step_saturation_shape(self):
        traj = StrayFieldTrajectory.step_saturation(t0=10.0, amplitude=100.0,
                                                    tau=5.0, baseline=3.0)
        assert traj.e_y(9.99) == 3.0
        assert_close(traj.e_y(10.0 + 5.0 * math.log(2)), 53.0, rtol=1e-12)
        assert_close(traj.e_y(1e4), 103.0, rtol=1e-9)
        with pytest.raises(ValidationError):
            StrayFieldTrajectory.step_saturation(t0=0, amplitude=1, tau=0.0)

    def test_from_samples(self):
        traj = StrayFieldTrajectory.from_samples([0.0, 10.0], [0.0, 50.0])
        assert_close(traj.e_y(5.0), 25.0, rtol=1e-12)
        with pytest.raises(ValidationError):
            StrayFieldTrajectory.from_samples([0.0], [1.0])

    def test_monitor_tracks_step(self, scan_setup):
        traj = StrayFieldTrajectory.step_saturation(t0=100.0, amplitude=120.0,
                                                    tau=30.0)
        grid = np.arange(-0.5, 0.55, 0.05)
        records = [simulate_scan(scan_setup, traj, grid, _pi_pulse(),
                                 shots=None, time_s=t)
                   for t in (0.0, 50.0, 400.0, 500.0)]
        pts = monitor_series(records)
        assert [p.timestamp_s for p in pts] == [0.0, 50.0, 400.0, 500.0]
        assert abs(pts[0].e_y_estimate) < 1e-4
        assert abs(pts[1].e_y_estimate) < 1e-4
        assert_close(pts[3].e_y_estimate, traj.e_y(500.0), atol=1e-3)
        d = pts[0].to_dict()
        assert set(d) == {"t", "e_y_estimate", "sigma", "chi2red"}
