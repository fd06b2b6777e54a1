"""CODATA physical constants used by every physics formula in the package."""

from dataclasses import dataclass

from scipy import constants as _sc


@dataclass(frozen=True)
class PhysicalConstants:
    """Immutable bundle of SI constants (CODATA 2018, via scipy).

    hbar = 1.054571817e-34 J s
    h    = 6.626070150e-34 J s
    k_B  = 1.380649000e-23 J/K
    eps0 = 8.854187813e-12 F/m
    mu0  = 1.256637062e-06 H/m
    c    = 2.997924580e+08 m/s
    """

    hbar: float = _sc.hbar
    h: float = _sc.h
    k_B: float = _sc.k
    epsilon_0: float = _sc.epsilon_0
    mu_0: float = _sc.mu_0
    c: float = _sc.c


CONSTANTS = PhysicalConstants()

# BCS weak-coupling ratio Delta_0 / (k_B T_c)
BCS_GAP_RATIO = 1.76
