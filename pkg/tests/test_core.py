"""Species, geometry, Lamb-Dicke kinematics, and phonon distributions."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trapsim import (AMU, HBAR, QE, YB171, IonSpecies, ModeSpec,
                     PhononDistribution, RamanGeometry, TruncationError,
                     ValidationError, ground_state, lamb_dicke, tail_n_max,
                     thermal_pmf, zero_point_spread)

from conftest import (REF_DELTA_K, REF_ETA_184, REF_ETA_211, REF_ETA_TILT,
                      REF_X0_184, REF_X0_211, assert_close)


class TestSpecies:
    def test_yb171_constants(self):
        assert YB171.charge_c == QE
        assert_close(YB171.mass_kg, 170.9363302 * AMU, rtol=1e-12)

    def test_rejects_nonpositive_mass(self):
        with pytest.raises(ValidationError):
            IonSpecies(mass_kg=0.0)

    def test_rejects_zero_charge(self):
        with pytest.raises(ValidationError):
            IonSpecies(mass_kg=1e-25, charge_c=0.0)


class TestGeometry:
    def test_counter_delta_k(self):
        g = RamanGeometry(wavelength_m=355e-9, configuration="counter")
        assert_close(g.delta_k, REF_DELTA_K, rtol=1e-14)
        # definition check against 4 pi / lambda
        assert_close(g.delta_k, 4.0 * math.pi / 355e-9, rtol=1e-14)

    def test_co_has_no_kick(self):
        g = RamanGeometry(configuration="co")
        assert g.delta_k == 0.0

    @pytest.mark.parametrize("alias", ["counter-propagating",
                                       "counter_propagating", "COUNTER"])
    def test_configuration_aliases(self, alias):
        assert RamanGeometry(configuration=alias).configuration == "counter"

    def test_unknown_configuration(self):
        with pytest.raises(ValidationError):
            RamanGeometry(configuration="sideways")


class TestZeroPointSpread:
    def test_frozen_values(self):
        assert_close(zero_point_spread(YB171, 2.11e6), REF_X0_211, rtol=1e-13)
        assert_close(zero_point_spread(YB171, 1.84e6), REF_X0_184, rtol=1e-13)

    def test_definition(self):
        f = 1.37e6
        want = math.sqrt(HBAR / (2 * YB171.mass_kg * 2 * math.pi * f))
        assert_close(zero_point_spread(YB171, f), want, rtol=1e-14)

    def test_rejects_bad_frequency(self):
        with pytest.raises(ValidationError):
            zero_point_spread(YB171, 0.0)


class TestLambDicke:
    def test_frozen_values(self, counter_geometry):
        assert_close(lamb_dicke(YB171, counter_geometry, 2.11e6, 45.0),
                     REF_ETA_211, rtol=1e-13)
        assert_close(lamb_dicke(YB171, counter_geometry, 1.84e6, 45.0),
                     REF_ETA_184, rtol=1e-13)

    def test_tilt_projection(self, counter_geometry):
        # two-ion tilt mode: frequency sqrt(f_radial^2 - f_axial^2), 45
        # degrees in-plane, and the 1/sqrt(2) participation per ion
        f_tilt = math.sqrt(2.11e6 ** 2 - 0.70e6 ** 2)
        eta = lamb_dicke(YB171, counter_geometry, f_tilt, 45.0) / math.sqrt(2)
        assert_close(eta, REF_ETA_TILT, rtol=1e-13)

    def test_co_geometry_is_zero(self, co_geometry):
        assert lamb_dicke(YB171, co_geometry, 2.11e6, 45.0) == 0.0

    def test_projection_angle_scaling(self, counter_geometry):
        full = lamb_dicke(YB171, counter_geometry, 2.11e6, 0.0)
        proj = lamb_dicke(YB171, counter_geometry, 2.11e6, 60.0)
        assert_close(proj, 0.5 * full, rtol=1e-12)

    def test_perpendicular_mode_decouples(self, counter_geometry):
        assert lamb_dicke(YB171, counter_geometry, 2.11e6, 90.0) == \
            pytest.approx(0.0, abs=1e-17)


class TestModeSpec:
    def test_rejects_negative_eta(self):
        with pytest.raises(ValidationError):
            ModeSpec(frequency_hz=1e6, lamb_dicke=-0.1)

    def test_rejects_zero_frequency(self):
        with pytest.raises(ValidationError):
            ModeSpec(frequency_hz=0.0, lamb_dicke=0.1)


class TestThermalPmf:
    def test_mean_matches_requested(self):
        # reference sum computed with 300 levels of the exact geometric pmf
        d = thermal_pmf(15.0, n_max=300)
        assert_close(d.nbar, 14.999998898661849, rtol=1e-12)

    def test_geometric_ratio(self):
        d = thermal_pmf(2.3, n_max=120)
        p = d.populations
        ratios = p[1:40] / p[:39]
        assert_close(ratios, 2.3 / 3.3, rtol=1e-12)

    def test_ground_state_limit(self):
        d = thermal_pmf(0.0)
        assert d.populations[0] == 1.0
        assert d.nbar == 0.0

    def test_normalization(self):
        for nbar in (0.0, 0.05, 1.0, 30.0, 200.0):
            d = thermal_pmf(nbar)
            assert abs(d.populations.sum() - 1.0) < 1e-12

    def test_small_n_max_raises_truncation(self):
        with pytest.raises(TruncationError) as exc:
            thermal_pmf(20.0, n_max=25)
        assert exc.value.payload["suggested_n_max"] >= 200

    def test_rejects_negative_nbar(self):
        with pytest.raises(ValidationError):
            thermal_pmf(-1.0)

    def test_auto_cutoff_tail_is_small(self):
        for nbar in (0.3, 4.0, 40.0):
            d = thermal_pmf(nbar, tol=1e-8)
            # raw (unnormalized) tail term sits below the requested tol
            raw = (nbar / (nbar + 1)) ** d.n_max / (nbar + 1)
            assert raw < 1e-8

    @given(nbar=st.floats(min_value=0.0, max_value=150.0,
                          allow_nan=False, allow_infinity=False))
    @settings(max_examples=200, deadline=None)
    def test_property_normalized_and_nonnegative(self, nbar):
        d = thermal_pmf(nbar)
        assert abs(d.populations.sum() - 1.0) < 1e-9
        assert d.populations.min() >= 0.0
        # renormalized truncation can only pull the mean slightly down
        assert d.nbar <= nbar + 1e-9


class TestPhononDistribution:
    def test_rejects_negative_population(self):
        with pytest.raises(ValidationError):
            PhononDistribution(np.array([1.1, -0.1]))

    def test_rejects_unnormalized(self):
        with pytest.raises(ValidationError):
            PhononDistribution(np.array([0.5, 0.4]))

    def test_extended_preserves_content(self):
        d = thermal_pmf(1.0, n_max=40)
        e = d.extended(60)
        assert e.n_max == 60
        assert np.array_equal(e.populations[:41], d.populations)
        assert np.all(e.populations[41:] == 0.0)
        assert_close(e.nbar, d.nbar, rtol=1e-15)

    def test_extended_refuses_to_shrink(self):
        with pytest.raises(ValidationError):
            thermal_pmf(1.0, n_max=40).extended(10)

    def test_ground_state(self):
        g = ground_state(12)
        assert g.n_max == 12
        assert g.nbar == 0.0


class TestTailNMax:
    def test_monotone_in_nbar(self):
        cuts = [tail_n_max(nb) for nb in (0.1, 1.0, 10.0, 100.0)]
        assert cuts == sorted(cuts)

    def test_floor(self):
        assert tail_n_max(0.0) == 30
        assert tail_n_max(20.0) >= 200
