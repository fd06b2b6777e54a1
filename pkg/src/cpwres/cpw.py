"""Coplanar-waveguide and thin-film forward physics.

Geometry enters through conformal mapping of a zero-thickness CPW on an
infinitely thick substrate; the film enters through its sheet kinetic
inductance and thin-film penetration depth.
"""

import math
from dataclasses import dataclass
from enum import Enum

from .constants import BCS_GAP_RATIO, CONSTANTS
from .errors import DomainError, NegativeKineticInductance
from .special import coth, ellip_k, ellip_k_complementary

DEFAULT_SUBSTRATE_PERMITTIVITY = 11.9  # silicon
DEFAULT_BULK_PENETRATION_DEPTH = 150e-9  # tantalum

# relative slack below which a negative kinetic inductance is roundoff; CODATA
# mu_0 and epsilon_0 reproduce c only to ~1e-12
_ZERO_LK_RTOL = 1e-9


class ResonatorType(str, Enum):
    QUARTER_WAVE = "quarter_wave"


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class CpwGeometry:
    """Center width, gap and length in metres; substrate relative permittivity."""

    center_width: float
    gap: float
    length: float
    substrate_permittivity: float = DEFAULT_SUBSTRATE_PERMITTIVITY
    resonator_type: ResonatorType = ResonatorType.QUARTER_WAVE

    def __post_init__(self):
        _positive("center_width", self.center_width)
        _positive("gap", self.gap)
        _positive("length", self.length)
        if not (math.isfinite(self.substrate_permittivity) and self.substrate_permittivity >= 1.0):
            raise DomainError(
                f"substrate_permittivity must be >= 1, got {self.substrate_permittivity!r}"
            )
        object.__setattr__(self, "resonator_type", ResonatorType(self.resonator_type))

    @property
    def modulus(self):
        return self.center_width / (self.center_width + 2.0 * self.gap)

    @property
    def effective_permittivity(self):
        return 0.5 * (self.substrate_permittivity + 1.0)


@dataclass(frozen=True)
class FilmProperties:
    """Thickness (m), critical temperature (K), normal sheet resistance (Ohm/sq)."""

    thickness: float
    critical_temperature: float
    sheet_resistance: float
    bulk_penetration_depth: float = DEFAULT_BULK_PENETRATION_DEPTH

    def __post_init__(self):
        _positive("thickness", self.thickness)
        _positive("critical_temperature", self.critical_temperature)
        _positive("sheet_resistance", self.sheet_resistance)
        _positive("bulk_penetration_depth", self.bulk_penetration_depth)

    @property
    def gap_energy(self):
        """Zero-temperature gap 1.76 k_B T_c in joules."""
        return BCS_GAP_RATIO * CONSTANTS.k_B * self.critical_temperature


@dataclass(frozen=True)
class LineParameters:
    """Per-unit-length line constants (H/m, F/m), impedance and phase velocity."""

    geometric_inductance: float
    capacitance: float
    kinetic_inductance: float
    impedance: float
    phase_velocity: float
    kinetic_fraction: float

    @property
    def total_inductance(self):
        return self.geometric_inductance + self.kinetic_inductance


def line_parameters_geometric(geom):
    """Conformal-mapping C_l, L_m and Z0 of the bare CPW (no kinetic term)."""
    k = geom.modulus
    if not 0.0 < k < 1.0:
        raise DomainError(f"CPW modulus must lie in (0, 1), got {k!r}")
    ratio = ellip_k(k) / ellip_k_complementary(k)
    capacitance = 4.0 * CONSTANTS.epsilon_0 * geom.effective_permittivity * ratio
    inductance = 0.25 * CONSTANTS.mu_0 / ratio
    return LineParameters(
        geometric_inductance=inductance,
        capacitance=capacitance,
        kinetic_inductance=0.0,
        impedance=math.sqrt(inductance / capacitance),
        phase_velocity=1.0 / math.sqrt(inductance * capacitance),
        kinetic_fraction=0.0,
    )


def kinetic_inductance_per_square(film):
    """Sheet kinetic inductance hbar R_s / (pi Delta_0), in henry per square."""
    return CONSTANTS.hbar * film.sheet_resistance / (math.pi * film.gap_energy)


def sheet_resistance_for_kinetic_inductance(l_k_square, critical_temperature):
    """Sheet resistance that yields ``l_k_square`` (H/sq) at the given T_c."""
    gap = BCS_GAP_RATIO * CONSTANTS.k_B * critical_temperature
    return l_k_square * math.pi * gap / CONSTANTS.hbar


def effective_penetration_depth(film):
    """Thin-film penetration depth lambda_0 coth(d / lambda_0) in metres."""
    lam = film.bulk_penetration_depth
    return lam * coth(film.thickness / lam)


def quarter_wave_frequency(length, inductance, capacitance):
    """Fundamental of a lambda/4 line: v_ph / (4 l) with v_ph = 1/sqrt(L C)."""
    return 1.0 / (4.0 * length * math.sqrt(inductance * capacitance))


def fundamental_frequency(geom):
    """Quarter-wave fundamental c / (4 l sqrt(eps_eff)) of the bare geometry."""
    if geom.resonator_type is not ResonatorType.QUARTER_WAVE:
        raise DomainError(f"unsupported resonator type {geom.resonator_type!r}")
    return CONSTANTS.c / (4.0 * geom.length * math.sqrt(geom.effective_permittivity))


def harmonic_frequency(geom, n):
    """Mode n of a quarter-wave resonator, (2n + 1) f0, n = 0, 1, 2, ..."""
    if int(n) != n or n < 0:
        raise DomainError(f"harmonic index must be a non-negative integer, got {n!r}")
    return (2 * int(n) + 1) * fundamental_frequency(geom)


def extract_kinetic_inductance_per_length(geom, measured_f0):
    """Infer L_k (H/m) from a measured quarter-wave fundamental.

    v_ph = 4 l f0 and L_m + L_k = 1 / (C_l v_ph^2), with C_l and L_m taken from
    the conformal-mapping geometry.  A measured frequency above the geometric
    prediction implies negative L_k and raises NegativeKineticInductance.
    """
    _positive("measured_f0", measured_f0)
    bare = line_parameters_geometric(geom)
    v_ph = 4.0 * geom.length * measured_f0
    total = 1.0 / (bare.capacitance * v_ph * v_ph)
    l_k = total - bare.geometric_inductance
    if l_k < 0.0:
        if -l_k > _ZERO_LK_RTOL * bare.geometric_inductance:
            raise NegativeKineticInductance(
                f"measured f0 = {measured_f0:.6g} Hz exceeds the geometric prediction "
                f"{bare.phase_velocity / (4.0 * geom.length):.6g} Hz"
            )
        l_k = 0.0
        total = bare.geometric_inductance
    return LineParameters(
        geometric_inductance=bare.geometric_inductance,
        capacitance=bare.capacitance,
        kinetic_inductance=l_k,
        impedance=math.sqrt(total / bare.capacitance),
        phase_velocity=v_ph,
        kinetic_fraction=l_k / total,
    )
