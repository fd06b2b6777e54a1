import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cpwres.constants import CONSTANTS
from cpwres.cpw import (
    CpwGeometry,
    FilmProperties,
    effective_penetration_depth,
    extract_kinetic_inductance_per_length,
    fundamental_frequency,
    harmonic_frequency,
    kinetic_inductance_per_square,
    line_parameters_geometric,
    quarter_wave_frequency,
    sheet_resistance_for_kinetic_inductance,
)
from cpwres.errors import DomainError, NegativeKineticInductance

EPS0 = 8.8541878128e-12
MU0 = 1.25663706212e-6


def conformal_oracle(w, s, er):
    k = mp.mpf(w) / (w + 2 * s)
    ratio = mp.ellipk(k * k) / mp.ellipk(1 - k * k)
    eps = (er + 1) / 2
    c = 4 * EPS0 * eps * ratio
    lm = MU0 / 4 / ratio
    return float(lm), float(c), float(mp.sqrt(lm / c))


@pytest.fixture
def geom():
    return CpwGeometry(center_width=4e-6, gap=2e-6, length=8e-3)


@pytest.fixture
def film40():
    return FilmProperties(thickness=40e-9, critical_temperature=4.06, sheet_resistance=1.764)


class TestLineParameters:
    def test_against_extended_precision(self, geom):
        lm, c, z0 = conformal_oracle(4e-6, 2e-6, 11.9)
        line = line_parameters_geometric(geom)
        assert line.geometric_inductance == pytest.approx(lm, rel=1e-9)
        assert line.capacitance == pytest.approx(c, rel=1e-9)
        assert line.impedance == pytest.approx(z0, rel=1e-9)

    def test_frozen_values(self, geom):
        line = line_parameters_geometric(geom)
        assert line.geometric_inductance == pytest.approx(4.018918753479942e-07, rel=1e-12)
        assert line.capacitance == pytest.approx(1.7857023995173486e-10, rel=1e-12)
        assert line.impedance == pytest.approx(47.44058897836102, rel=1e-12)

    def test_reference_line_constants_within_five_percent(self, geom):
        line = line_parameters_geometric(geom)
        assert line.geometric_inductance == pytest.approx(4.13e-7, rel=0.05)
        assert line.capacitance == pytest.approx(1.73e-10, rel=0.05)
        assert line.impedance == pytest.approx(49.0, rel=0.05)

    def test_vacuum_phase_velocity_is_c(self):
        g = CpwGeometry(10e-6, 6e-6, 5e-3, substrate_permittivity=1.0)
        assert g.effective_permittivity == 1.0
        assert line_parameters_geometric(g).phase_velocity == pytest.approx(CONSTANTS.c, rel=1e-12)

    @given(st.floats(1e-7, 1e-4), st.floats(1e-7, 1e-4), st.floats(1.0, 20.0))
    def test_phase_velocity_independent_of_geometry(self, w, s, er):
        line = line_parameters_geometric(CpwGeometry(w, s, 1e-3, substrate_permittivity=er))
        assert line.phase_velocity == pytest.approx(CONSTANTS.c / math.sqrt((er + 1) / 2), rel=1e-12)

    def test_impedance_grows_with_gap(self):
        z = [line_parameters_geometric(CpwGeometry(10e-6, s, 1e-3)).impedance for s in (2e-6, 5e-6, 10e-6)]
        assert z[0] < z[1] < z[2]

    @pytest.mark.parametrize("kw", [
        {"center_width": 0.0}, {"gap": -1e-6}, {"length": float("nan")}, {"substrate_permittivity": 0.5},
    ])
    def test_invalid_geometry(self, kw):
        args = {"center_width": 4e-6, "gap": 2e-6, "length": 1e-3}
        args.update(kw)
        with pytest.raises(DomainError):
            CpwGeometry(**args)


class TestKineticInductance:
    @pytest.mark.parametrize("tc,lk", [(4.06, 0.6e-12), (4.2, 0.25e-12), (4.49, 0.2e-12)])
    def test_inversion_reproduces_sheet_inductance(self, tc, lk):
        rs = sheet_resistance_for_kinetic_inductance(lk, tc)
        film = FilmProperties(40e-9, tc, rs)
        assert kinetic_inductance_per_square(film) == pytest.approx(lk, rel=1e-14)

    def test_sheet_resistance_value(self):
        assert sheet_resistance_for_kinetic_inductance(0.6e-12, 4.06) == pytest.approx(1.7634, rel=1e-4)

    def test_formula(self, film40):
        gap = 1.76 * CONSTANTS.k_B * 4.06
        assert kinetic_inductance_per_square(film40) == pytest.approx(CONSTANTS.hbar * 1.764 / (math.pi * gap), rel=1e-15)
        assert kinetic_inductance_per_square(film40) == pytest.approx(0.6e-12, rel=1e-3)

    def test_zero_thickness_rejected(self):
        with pytest.raises(DomainError):
            FilmProperties(0.0, 4.06, 1.764)


class TestPenetrationDepth:
    @pytest.mark.parametrize("d,expected", [(40e-9, 576e-9), (100e-9, 257e-9)])
    def test_thin_film_values(self, d, expected):
        film = FilmProperties(d, 4.06, 1.0, bulk_penetration_depth=150e-9)
        oracle = 150e-9 / math.tanh(d / 150e-9)
        assert effective_penetration_depth(film) == pytest.approx(oracle, rel=1e-14)
        assert effective_penetration_depth(film) == pytest.approx(expected, rel=5e-3)

    def test_decreasing_in_thickness(self):
        ds = np.linspace(10e-9, 500e-9, 100)
        lam = [effective_penetration_depth(FilmProperties(d, 4.0, 1.0)) for d in ds]
        assert np.all(np.diff(lam) < 0)

    def test_thick_limit(self):
        assert effective_penetration_depth(FilmProperties(10e-6, 4.0, 1.0)) == pytest.approx(150e-9, rel=1e-12)


class TestFrequencies:
    def test_fundamental(self, geom):
        assert fundamental_frequency(geom) == pytest.approx(3.6888489081571217e9, rel=1e-12)
        assert fundamental_frequency(geom) == pytest.approx(
            CONSTANTS.c / (4 * 8e-3 * math.sqrt(6.45)), rel=1e-15)

    def test_matches_line_constants(self, geom):
        line = line_parameters_geometric(geom)
        f = quarter_wave_frequency(geom.length, line.geometric_inductance, line.capacitance)
        assert f == pytest.approx(fundamental_frequency(geom), rel=1e-12)

    def test_harmonics_are_odd_multiples(self, geom):
        f0 = fundamental_frequency(geom)
        assert [harmonic_frequency(geom, n) / f0 for n in range(4)] == pytest.approx([1, 3, 5, 7], rel=1e-15)

    @pytest.mark.parametrize("n", [-1, 1.5])
    def test_bad_harmonic(self, geom, n):
        with pytest.raises(DomainError):
            harmonic_frequency(geom, n)


class TestExtraction:
    def test_geometric_frequency_gives_zero(self, geom):
        out = extract_kinetic_inductance_per_length(geom, fundamental_frequency(geom))
        assert out.kinetic_inductance == 0.0
        assert out.kinetic_fraction == 0.0

    def test_measured_frequency(self, geom):
        out = extract_kinetic_inductance_per_length(geom, 3.654e9)
        assert out.kinetic_inductance == pytest.approx(7.7e-9, rel=0.01)
        assert out.kinetic_fraction == pytest.approx(0.0188, rel=0.01)
        assert out.phase_velocity == pytest.approx(4 * 8e-3 * 3.654e9, rel=1e-15)

    @given(st.floats(0.0, 0.5))
    def test_round_trip(self, fraction):
        g = CpwGeometry(4e-6, 2e-6, 8e-3)
        bare = line_parameters_geometric(g)
        lk = bare.geometric_inductance * fraction / (1 - fraction)
        f0 = quarter_wave_frequency(g.length, bare.geometric_inductance + lk, bare.capacitance)
        out = extract_kinetic_inductance_per_length(g, f0)
        assert out.kinetic_fraction == pytest.approx(fraction, abs=1e-12)

    def test_negative_rejected(self, geom):
        with pytest.raises(NegativeKineticInductance):
            extract_kinetic_inductance_per_length(geom, 1.01 * fundamental_frequency(geom))
