"""Transcendental functions needed by the resonator physics.

Only four families are provided: the complete elliptic integral of the first
kind, the order-zero modified Bessel functions, the real part of the digamma
function on the line Re z = 1/2, and a numerically careful coth.

Elliptic modulus convention
---------------------------
``ellip_k(k)`` takes the *modulus* k, i.e. it returns

    K(k) = integral_0^{pi/2} dtheta / sqrt(1 - k^2 sin^2 theta)

This differs from ``scipy.special.ellipk(m)``, which takes the *parameter*
m = k^2.  ``ellip_k(0.5) == scipy.special.ellipk(0.25)``.
"""

import math

import numpy as np

from .errors import DomainError

EULER_GAMMA = 0.5772156649015329
ZETA3 = 1.2020569031595943

# B_2, B_4, ..., B_16 for the digamma asymptotic series
_BERNOULLI_EVEN = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
)

_AGM_MAX_ITER = 64
_K0_SERIES_MAX_X = 2.0
_I0_SERIES_MAX_X = 20.0
_K0_QUAD_STEP = 0.125
_DIGAMMA_SHIFT = 10


def _as_float_array(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return arr


def _out(arr, scalar):
    return float(arr) if scalar else arr


def _agm(a, b):
    a = np.array(a, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True)
    for _ in range(_AGM_MAX_ITER):
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        if np.all(np.abs(a - b) <= 2.0 * np.finfo(float).eps * a):
            break
    return 0.5 * (a + b)


def ellip_k(modulus):
    """Complete elliptic integral of the first kind K(k), modulus convention.

    Evaluated as pi / (2 AGM(1, k')) with k' = sqrt(1 - k^2).  Accepts scalars
    or arrays; raises DomainError unless 0 <= k < 1.
    """
    scalar = np.ndim(modulus) == 0
    k = _as_float_array(modulus, "modulus")
    if np.any((k < 0.0) | (k >= 1.0)):
        raise DomainError(f"elliptic modulus must satisfy 0 <= k < 1, got {modulus!r}")
    kp = np.sqrt((1.0 - k) * (1.0 + k))
    return _out(np.pi / (2.0 * _agm(np.ones_like(k), kp)), scalar)


def ellip_k_complementary(modulus):
    """K(k') with k' = sqrt(1 - k^2), computed directly from k.

    Uses AGM(1, k) so that no precision is lost forming k' when k is tiny.
    Valid for 0 < k <= 1.
    """
    scalar = np.ndim(modulus) == 0
    k = _as_float_array(modulus, "modulus")
    if np.any((k <= 0.0) | (k > 1.0)):
        raise DomainError(f"complementary K needs 0 < k <= 1, got {modulus!r}")
    return _out(np.pi / (2.0 * _agm(np.ones_like(k), k)), scalar)


def _i0_series(x):
    # all terms positive: no cancellation at any x
    q = 0.25 * x * x
    term = np.ones_like(x)
    total = np.ones_like(x)
    m = 1
    while True:
        term = term * q / (m * m)
        total = total + term
        if np.all(term <= 1e-17 * total):
            return total
        m += 1


def _i0_asymptotic(x):
    # I0(x) ~ e^x / sqrt(2 pi x) * sum ((2k-1)!!)^2 / (k! 8^k x^k)
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 40):
        term = term * (2 * k - 1) ** 2 / (8.0 * k * x)
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * total):
            break
    return np.exp(x) / np.sqrt(2.0 * np.pi * x) * total


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero, for x >= 0."""
    scalar = np.ndim(x) == 0
    xa = _as_float_array(x, "x")
    if np.any(xa < 0.0):
        raise DomainError(f"bessel_i0 requires x >= 0, got {x!r}")
    xa = np.atleast_1d(xa)
    out = np.empty_like(xa)
    small = xa <= _I0_SERIES_MAX_X
    if np.any(small):
        out[small] = _i0_series(xa[small])
    if np.any(~small):
        out[~small] = _i0_asymptotic(xa[~small])
    return _out(out.reshape(np.shape(x)), scalar)


def _k0_series(x):
    # K0 = -(ln(x/2) + gamma) I0(x) + sum_{m>=1} (x^2/4)^m / (m!)^2 * H_m
    q = 0.25 * x * x
    term = np.ones_like(x)
    i0 = np.ones_like(x)
    tail = np.zeros_like(x)
    harmonic = 0.0
    m = 1
    while True:
        term = term * q / (m * m)
        harmonic += 1.0 / m
        i0 = i0 + term
        tail = tail + term * harmonic
        if np.all(term * harmonic <= 1e-17 * np.abs(tail)) and np.all(term <= 1e-17 * i0):
            break
        m += 1
    return -(np.log(0.5 * x) + EULER_GAMMA) * i0 + tail


def _k0_quadrature(x):
    # K0(x) = int_0^inf exp(-x cosh t) dt; the trapezoid rule converges
    # geometrically for this analytic even integrand once the step resolves
    # its width ~ 1/sqrt(x).  Scaled by e^{-x}.
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        h = min(_K0_QUAD_STEP, 0.5 / math.sqrt(xi))
        t_max = math.acosh(1.0 + 745.0 / xi)
        t = np.arange(0.0, t_max + h, h)
        vals = np.exp(-xi * 2.0 * np.sinh(0.5 * t) ** 2)
        out[i] = math.exp(-xi) * h * (vals.sum() - 0.5 * vals[0])
    return out


def bessel_k0(x):
    """Modified Bessel function of the second kind, order zero, for x > 0."""
    scalar = np.ndim(x) == 0
    xa = _as_float_array(x, "x")
    if np.any(xa <= 0.0):
        raise DomainError(f"bessel_k0 requires x > 0, got {x!r}")
    xa = np.atleast_1d(xa)
    out = np.empty_like(xa)
    small = xa <= _K0_SERIES_MAX_X
    if np.any(small):
        out[small] = _k0_series(xa[small])
    if np.any(~small):
        out[~small] = _k0_quadrature(xa[~small])
    return _out(out.reshape(np.shape(x)), scalar)


def digamma_real_part_half_plus_iy(y):
    """Re psi(1/2 + i y) for real y.

    Shifts the argument by the recurrence psi(z) = psi(z + N) - sum 1/(z + k)
    and evaluates the Stirling-type asymptotic series at z + N.  The result is
    even in y.
    """
    scalar = np.ndim(y) == 0
    ya = np.abs(_as_float_array(y, "y"))
    z = 0.5 + 1j * ya
    # Re 1/(z + k) = (k + 1/2) / ((k + 1/2)^2 + y^2)
    shift_sum = np.zeros_like(ya)
    for k in range(_DIGAMMA_SHIFT):
        r = k + 0.5
        shift_sum = shift_sum + r / (r * r + ya * ya)
    w = z + _DIGAMMA_SHIFT
    w2inv = 1.0 / (w * w)
    series = np.zeros_like(w)
    power = np.ones_like(w)
    for j, b in enumerate(_BERNOULLI_EVEN, start=1):
        power = power * w2inv
        series = series + b / (2 * j) * power
    psi_w = np.log(w) - 0.5 / w - series
    return _out(psi_w.real - shift_sum, scalar)


def coth(x):
    """Hyperbolic cotangent for x > 0, accurate at both ends of the range."""
    scalar = np.ndim(x) == 0
    xa = _as_float_array(x, "x")
    if np.any(xa <= 0.0):
        raise DomainError(f"coth requires x > 0, got {x!r}")
    xa = np.atleast_1d(xa)
    out = np.empty_like(xa)
    tiny = xa < 1e-4
    out[tiny] = 1.0 / xa[tiny] + xa[tiny] / 3.0
    big = xa > 20.0
    out[big] = 1.0 + 2.0 * np.exp(-2.0 * xa[big])
    mid = ~(tiny | big)
    out[mid] = 1.0 / np.tanh(xa[mid])
    return _out(out.reshape(np.shape(x)), scalar)
