"""Photon-number calibration, TLS and quasiparticle loss, frequency shifts.

Loss contributions are expressed as dimensionless 1/Q terms and add:

    1/Q_i = delta_TLS(T, n) + delta_qp(T) + delta_other

The TLS frequency shift is returned as a *fractional* shift Delta f / f_r
(the defining expression is dimensionless); the quasiparticle shift is
returned in hertz.  The gap is treated as temperature independent.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, lsq_linear

from .constants import BCS_GAP_RATIO, CONSTANTS
from .errors import IllConditioned, NonConvergence, NonPhysicalScattering, ValidityRangeWarning
from .special import bessel_i0, bessel_k0, digamma_real_part_half_plus_iy

INFINITE_Q = math.inf

SCATTERING_TOLERANCE = 1e-9
TLS_MIN_POINTS = 6
TLS_MIN_DECADES = 2.0
TEMPERATURE_MIN_POINTS = 8
# below this fraction of T_c the thermal quasiparticle population (e^{-1.76/0.1}
# ~ 2e-8) is too small for the kinetic fraction to be identifiable
QP_IDENTIFIABLE_TC_FRACTION = 0.1

NC_BOUNDS = (1e-2, 1e10)
BETA_BOUNDS = (1e-3, 2.0)
LOSS_BOUNDS = (0.0, 1e-2)
DELTA0_FLOOR = 1e-12


@dataclass(frozen=True)
class PowerBudget:
    """Source power and the attenuation between the VNA and the device."""

    vna_power_dBm: float
    fridge_attenuation_dB: float = 60.0
    room_temp_attenuation_dB: float = 20.0
    extra_line_loss_dB: float = 0.0

    def __post_init__(self):
        for name in ("fridge_attenuation_dB", "room_temp_attenuation_dB", "extra_line_loss_dB"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")
        if not math.isfinite(self.vna_power_dBm):
            raise ValueError("vna_power_dBm must be finite")

    @property
    def total_attenuation_dB(self):
        return self.fridge_attenuation_dB + self.room_temp_attenuation_dB + self.extra_line_loss_dB

    @property
    def input_power_W(self):
        return 10.0 ** ((self.vna_power_dBm - self.total_attenuation_dB - 30.0) / 10.0)


@dataclass(frozen=True)
class TlsFitParameters:
    delta0_tls: float
    n_c: float
    beta: float
    delta_other: float = 0.0
    uncertainties: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class QuasiparticleModel:
    """Gap (J), kinetic inductance fraction, and D(E_F) for the density form.

    ``density_of_states`` (J^-1 m^-3) cancels in the thermal closure used by
    ``qp_loss_density_form`` and exists only so that the cancellation can be
    checked.
    """

    gap: float
    kinetic_fraction: float
    density_of_states: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.gap) and self.gap > 0):
            raise ValueError(f"gap must be positive, got {self.gap!r}")
        if not 0.0 <= self.kinetic_fraction < 1.0:
            raise ValueError(f"kinetic_fraction must lie in [0, 1), got {self.kinetic_fraction!r}")
        if not (math.isfinite(self.density_of_states) and self.density_of_states > 0):
            raise ValueError("density_of_states must be positive")

    @classmethod
    def from_critical_temperature(cls, critical_temperature, kinetic_fraction, density_of_states=1.0):
        gap = BCS_GAP_RATIO * CONSTANTS.k_B * critical_temperature
        return cls(gap=gap, kinetic_fraction=kinetic_fraction, density_of_states=density_of_states)

    @property
    def critical_temperature(self):
        return self.gap / (BCS_GAP_RATIO * CONSTANTS.k_B)


@dataclass(frozen=True)
class PowerPartition:
    reflected: float
    transmitted: float
    absorbed: float


# -- photon number -----------------------------------------------------------


def photon_number(input_power_W, f_r, Q_i, Q_c):
    """<n> = (2 Q_c / w) (Q_i / (Q_i + Q_c))^2 P_in / (hbar w), w = 2 pi f_r."""
    omega = 2.0 * math.pi * f_r
    ratio = 1.0 if math.isinf(Q_i) else Q_i / (Q_i + Q_c)
    return 2.0 * Q_c / omega * ratio * ratio * input_power_W / (CONSTANTS.hbar * omega)


def mean_photon_number(budget, fit):
    """Photon number for a fitted trace (NotchFitResult) driven per ``budget``."""
    p = fit.params
    return photon_number(budget.input_power_W, p.f_r, fit.Q_i, p.Q_c)


def power_partition(input_power_W, s11, s21):
    r = abs(s11) ** 2
    t = abs(s21) ** 2
    if r + t > 1.0 + SCATTERING_TOLERANCE:
        raise NonPhysicalScattering(f"|S11|^2 + |S21|^2 = {r + t:.12g} exceeds 1")
    absorbed = max(1.0 - r - t, 0.0)
    return PowerPartition(
        reflected=input_power_W * r,
        transmitted=input_power_W * t,
        absorbed=input_power_W * absorbed,
    )


# -- loss models -------------------------------------------------------------


def _thermal_factor(T, f_r):
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be positive")
    return np.tanh(CONSTANTS.h * f_r / (2.0 * CONSTANTS.k_B * T))


def _scalar(value, like):
    return float(value) if np.ndim(like) == 0 else value


def tls_loss(T, n_ph, f_r, p):
    """delta0 tanh(h f / 2 k T) / sqrt(1 + (n / n_c)^beta)."""
    n = np.asarray(n_ph, dtype=float)
    sat = np.sqrt(1.0 + (np.maximum(n, 0.0) / p.n_c) ** p.beta)
    out = p.delta0_tls * _thermal_factor(T, f_r) / sat
    return _scalar(out, np.broadcast(np.asarray(T), n))


def _zeta_xi(T, f_r, gap):
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be positive")
    zeta = gap / (CONSTANTS.k_B * T)
    xi = CONSTANTS.hbar * 2.0 * math.pi * f_r / (2.0 * CONSTANTS.k_B * T)
    if np.any(zeta <= 1.0):
        warnings.warn(
            "gap-to-temperature ratio <= 1: outside the low-temperature expansion",
            ValidityRangeWarning,
            stacklevel=3,
        )
    return zeta, xi


def qp_loss_mattis_bardeen(T, f_r, q):
    """Thermal quasiparticle loss from the low-temperature Mattis-Bardeen expansion.

    (2 gamma / pi) e^{-zeta} sinh(xi) K0(xi)
        / [1 - e^{-zeta} (sqrt(2 pi / zeta) - 2 e^{-xi} I0(xi))]

    with zeta = Delta / k T, xi = hbar w / 2 k T and gamma the kinetic fraction.
    """
    zeta, xi = _zeta_xi(T, f_r, q.gap)
    ez = np.exp(-zeta)
    # sinh(xi) K0(xi) and e^{-xi} I0(xi) stay finite for large xi
    num = ez * np.sinh(xi) * bessel_k0(xi)
    den = 1.0 - ez * (np.sqrt(2.0 * np.pi / zeta) - 2.0 * np.exp(-xi) * bessel_i0(xi))
    out = 2.0 * q.kinetic_fraction / np.pi * num / den
    return _scalar(out, T)


def thermal_quasiparticle_density(T, q):
    """2 D(E_F) sqrt(2 pi k T Delta) e^{-Delta / k T}."""
    T = np.asarray(T, dtype=float)
    kT = CONSTANTS.k_B * T
    return 2.0 * q.density_of_states * np.sqrt(2.0 * np.pi * kT * q.gap) * np.exp(-q.gap / kT)


def qp_loss_density_form(T, f_r, q):
    """(alpha / pi) sqrt(2 Delta / hbar f_r) n_qp / (D(E_F) Delta), thermal n_qp."""
    _zeta_xi(T, f_r, q.gap)
    n_qp = thermal_quasiparticle_density(T, q)
    out = (q.kinetic_fraction / np.pi) * np.sqrt(2.0 * q.gap / (CONSTANTS.hbar * f_r)) * n_qp / (
        q.density_of_states * q.gap
    )
    return _scalar(out, T)


def total_loss(T, n_ph, f_r, p, q=None):
    """delta_TLS + delta_qp (Mattis-Bardeen) + delta_other."""
    loss = tls_loss(T, n_ph, f_r, p) + p.delta_other
    if q is not None and q.kinetic_fraction > 0:
        loss = loss + qp_loss_mattis_bardeen(T, f_r, q)
    return loss


def quality_factor(loss):
    """1 / loss, with INFINITE_Q for exactly zero loss."""
    arr = np.asarray(loss, dtype=float)
    if np.any(arr < 0):
        raise ValueError("loss must be non-negative")
    with np.errstate(divide="ignore"):
        out = np.where(arr == 0.0, INFINITE_Q, 1.0 / np.where(arr == 0.0, 1.0, arr))
    return float(out) if np.ndim(loss) == 0 else out


# -- frequency shifts ---------------------------------------------------------


def frequency_shift_tls(T, f_r, delta0_tls):
    """Fractional TLS shift (delta0 / pi) [Re psi(1/2 + i y) - ln y], y = h f / 2 pi k T."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be positive")
    y = CONSTANTS.h * f_r / (2.0 * math.pi * CONSTANTS.k_B * T)
    out = delta0_tls / math.pi * (digamma_real_part_half_plus_iy(y) - np.log(y))
    return _scalar(out, T)


def frequency_shift_qp(T, f_r, q):
    """Quasiparticle shift in Hz, -(1/2) alpha f_r zeta / sinh(zeta); never positive."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("temperature must be positive")
    zeta = q.gap / (CONSTANTS.k_B * T)
    # zeta / sinh(zeta) written to avoid overflow at low T
    ratio = 2.0 * zeta * np.exp(-zeta) / (-np.expm1(-2.0 * zeta))
    out = -0.5 * q.kinetic_fraction * f_r * ratio
    return _scalar(out, T)


def total_frequency_shift(T, f_r, delta0_tls, q, T_ref=None):
    """TLS plus quasiparticle shift in Hz, optionally referenced to ``T_ref``."""
    def shift(t):
        return f_r * frequency_shift_tls(t, f_r, delta0_tls) + frequency_shift_qp(t, f_r, q)

    out = shift(T)
    if T_ref is not None:
        out = out - shift(T_ref)
    return out


# -- sweep fits ----------------------------------------------------------------


@dataclass(frozen=True)
class SweepPoint:
    x: float  # photon number or temperature
    Q_i: float
    sigma: float


def _as_points(points):
    arr = np.array([(float(p[0]), float(p[1]), float(p[2])) for p in points], dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise IllConditioned("no sweep points")
    if not np.all(np.isfinite(arr)):
        raise ValueError("sweep points must be finite")
    if np.any(arr[:, 1] <= 0) or np.any(arr[:, 2] <= 0):
        raise ValueError("Q_i and sigma must be positive")
    return arr[np.argsort(arr[:, 0], kind="stable")]


@dataclass(frozen=True)
class PowerSweepAnalysis:
    temperature: float
    f_r: float
    photon_numbers: np.ndarray
    Q_i: np.ndarray
    sigma: np.ndarray
    tls: TlsFitParameters
    reduced_chi2: float

    def model_Q_i(self, n_ph):
        return quality_factor(total_loss(self.temperature, n_ph, self.f_r, self.tls))


@dataclass(frozen=True)
class TemperatureSweepAnalysis:
    photon_number: float
    f_r: float
    temperatures: np.ndarray
    Q_i: np.ndarray
    sigma: np.ndarray
    tls: TlsFitParameters
    qp: QuasiparticleModel
    uncertainties: dict
    reduced_chi2: float

    @property
    def kinetic_fraction(self):
        return self.qp.kinetic_fraction

    def model_Q_i(self, T):
        return quality_factor(total_loss(T, self.photon_number, self.f_r, self.tls, self.qp))


def _covariance(J):
    JTJ = J.T @ J
    try:
        return np.linalg.inv(JTJ)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(JTJ)


def fit_tls_power_sweep(points, T, f_r, *, max_nfev=2000):
    """Weighted fit of 1/Q_i(n) = TLS(n) + delta_other over a power sweep.

    ``points`` is a sequence of (n_ph, Q_i, sigma_Q_i).  Residuals are formed in
    loss space with sigma_loss = sigma / Q_i^2; delta0 and n_c are fitted as
    logarithms.  Starts from the documented heuristic guess and from a few
    alternative critical photon numbers, keeping the lowest cost.
    """
    arr = _as_points(points)
    n, q_i, sig = arr.T
    if n.size < TLS_MIN_POINTS:
        raise IllConditioned(f"need at least {TLS_MIN_POINTS} points, got {n.size}")
    if np.any(n <= 0):
        raise ValueError("photon numbers must be positive")
    decades = math.log10(n.max() / n.min())
    if decades < TLS_MIN_DECADES:
        raise IllConditioned(f"sweep spans {decades:.2f} decades; beta is not identifiable")

    loss = 1.0 / q_i
    sig_loss = sig / q_i ** 2
    therm = float(_thermal_factor(T, f_r))

    def model(x, nn):
        return math.exp(x[0]) * therm / np.sqrt(1.0 + (nn / math.exp(x[1])) ** x[2]) + x[3]

    def resid(x):
        return (model(x, n) - loss) / sig_loss

    d_other0 = float(np.clip(loss[-1], LOSS_BOUNDS[0], LOSS_BOUNDS[1]))
    d0_0 = max(loss[0] / therm - d_other0, 0.5 * loss[0] / therm, DELTA0_FLOOR)
    nc_geo = math.exp(np.mean(np.log(n)))
    lo = [math.log(DELTA0_FLOOR), math.log(NC_BOUNDS[0]), BETA_BOUNDS[0], LOSS_BOUNDS[0]]
    hi = [math.log(LOSS_BOUNDS[1]), math.log(NC_BOUNDS[1]), BETA_BOUNDS[1], LOSS_BOUNDS[1]]
    starts = [nc_geo] + [float(v) for v in np.geomspace(n.min(), n.max(), 5)]
    best = None
    for nc0 in starts:
        nc0 = float(np.clip(nc0, NC_BOUNDS[0], NC_BOUNDS[1]))
        x0 = np.array([math.log(d0_0), math.log(nc0), 0.5, d_other0])
        res = least_squares(
            resid, x0, bounds=(lo, hi), method="trf", x_scale=[1.0, 1.0, 0.1, max(loss.max(), 1e-12)],
            max_nfev=max_nfev,
        )
        if res.status > 0 and (best is None or res.cost < best.cost):
            best = res
    if best is None:
        raise NonConvergence("TLS power-sweep fit did not converge")

    x = best.x
    dof = max(n.size - 4, 1)
    cov = _covariance(best.jac)
    d0, nc = math.exp(x[0]), math.exp(x[1])
    jac_t = np.diag([d0, nc, 1.0, 1.0])
    cov_p = jac_t @ cov @ jac_t.T
    sd = np.sqrt(np.clip(np.diag(cov_p), 0.0, None))
    params = TlsFitParameters(
        delta0_tls=d0,
        n_c=nc,
        beta=float(x[2]),
        delta_other=float(x[3]),
        uncertainties={"delta0_tls": sd[0], "n_c": sd[1], "beta": sd[2], "delta_other": sd[3]},
    )
    return PowerSweepAnalysis(
        temperature=T,
        f_r=f_r,
        photon_numbers=n,
        Q_i=q_i,
        sigma=sig,
        tls=params,
        reduced_chi2=float(2.0 * best.cost / dof),
    )


def fit_temperature_sweep(points, n_ph, f_r, q, saturation=None):
    """Joint fit of delta0_TLS, delta_other and the kinetic fraction over Q_i(T).

    ``points`` is a sequence of (T, Q_i, sigma_Q_i).  The gap is fixed by ``q``;
    TLS saturation at ``n_ph`` uses (n_c, beta) from ``saturation`` (a
    TlsFitParameters, e.g. from a power sweep) and is ignored when None.  With
    the gap and saturation fixed the model is linear in the three unknowns,
    which are found by bounded weighted linear least squares.
    """
    arr = _as_points(points)
    T, q_i, sig = arr.T
    if T.size < TEMPERATURE_MIN_POINTS:
        raise IllConditioned(f"need at least {TEMPERATURE_MIN_POINTS} points, got {T.size}")
    if np.any(T <= 0):
        raise ValueError("temperatures must be positive")
    t_min = QP_IDENTIFIABLE_TC_FRACTION * q.critical_temperature
    if T.max() < t_min:
        raise IllConditioned(
            f"all temperatures lie below {t_min:.3g} K; the quasiparticle term is not identifiable"
        )

    sat = 1.0 if saturation is None else math.sqrt(1.0 + (n_ph / saturation.n_c) ** saturation.beta)
    unit_qp = QuasiparticleModel(gap=q.gap, kinetic_fraction=0.5, density_of_states=q.density_of_states)
    cols = np.column_stack((
        _thermal_factor(T, f_r) / sat,
        np.ones_like(T),
        qp_loss_mattis_bardeen(T, f_r, unit_qp) / 0.5,
    ))
    w = q_i ** 2 / sig  # 1 / sigma_loss
    A = cols * w[:, None]
    b = w / q_i
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    res = lsq_linear(A / scale, b, bounds=(0.0, np.array([1e-2, 1e-2, 0.999]) * scale), method="bvls")
    if not res.success:
        raise NonConvergence(f"temperature fit failed: {res.message}")
    coef = res.x / scale
    cov = _covariance(A)
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    r = A @ coef - b
    dof = max(T.size - 3, 1)
    tls = TlsFitParameters(
        delta0_tls=float(coef[0]),
        n_c=math.inf if saturation is None else saturation.n_c,
        beta=1.0 if saturation is None else saturation.beta,
        delta_other=float(coef[1]),
        uncertainties={"delta0_tls": sd[0], "delta_other": sd[1]},
    )
    fitted_qp = QuasiparticleModel(gap=q.gap, kinetic_fraction=float(coef[2]), density_of_states=q.density_of_states)
    return TemperatureSweepAnalysis(
        photon_number=n_ph,
        f_r=f_r,
        temperatures=T,
        Q_i=q_i,
        sigma=sig,
        tls=tls,
        qp=fitted_qp,
        uncertainties={"delta0_tls": sd[0], "delta_other": sd[1], "kinetic_fraction": sd[2]},
        reduced_chi2=float(r @ r / dof),
    )
