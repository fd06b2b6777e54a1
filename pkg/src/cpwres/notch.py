"""Notch-type resonator S21 model, trace container and synthetic noise.

The full model is

    S21(f) = a e^{i alpha} e^{-2 pi i f tau}
             * [1 - (Q_l / |Q_c|) e^{i phi} / (1 + 2 i Q_l (f / f_r - 1))]

The prefactor is the measurement environment (cable attenuation, phase offset,
electronic delay); the bracket is the ideal side-coupled resonator whose
response traces a circle of diameter Q_l / |Q_c| in the complex plane.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

MIN_FIT_POINTS = 16


@dataclass(frozen=True)
class NotchParameters:
    f_r: float
    Q_l: float
    Q_c: float  # |Q_c|
    phi: float = 0.0
    a: float = 1.0
    alpha: float = 0.0
    tau: float = 0.0

    def __post_init__(self):
        for name in ("f_r", "Q_l", "Q_c", "a"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        for name in ("phi", "alpha", "tau"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if abs(self.phi) >= 0.5 * math.pi:
            raise ValueError(f"|phi| must be below pi/2, got {self.phi!r}")

    @property
    def inverse_Q_i(self):
        return 1.0 / self.Q_l - math.cos(self.phi) / self.Q_c

    @property
    def Q_i(self):
        inv = self.inverse_Q_i
        return math.inf if inv == 0.0 else 1.0 / inv

    @property
    def is_physical(self):
        return self.inverse_Q_i > 0.0

    @property
    def linewidth(self):
        return self.f_r / self.Q_l

    @property
    def diameter(self):
        """Circle diameter of the resonator term, Q_l / |Q_c|."""
        return self.Q_l / self.Q_c


@dataclass
class SweepMeta:
    vna_power_dBm: float | None = None
    temperature_K: float | None = None
    attenuation_chain_dB: list = field(default_factory=list)
    label: str = ""
    comments: list = field(default_factory=list)


@dataclass
class FrequencySweep:
    """Complex S21 versus frequency (Hz), strictly increasing, all finite."""

    frequencies: np.ndarray
    s21: np.ndarray
    meta: SweepMeta = field(default_factory=SweepMeta)
    s11: np.ndarray | None = None

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.s21 = np.asarray(self.s21, dtype=complex)
        if self.frequencies.ndim != 1 or self.frequencies.shape != self.s21.shape:
            raise ValueError("frequencies and s21 must be 1-D arrays of equal length")
        if self.s11 is not None:
            self.s11 = np.asarray(self.s11, dtype=complex)
            if self.s11.shape != self.s21.shape:
                raise ValueError("s11 must match s21 in length")
        if not np.all(np.isfinite(self.frequencies)) or not np.all(np.isfinite(self.s21)):
            raise ValueError("sweep contains non-finite values")
        if np.any(np.diff(self.frequencies) <= 0):
            raise ValueError("frequencies must be strictly increasing")

    def __len__(self):
        return self.frequencies.size


def resonator_response(f, f_r, Q_l, Q_c, phi=0.0):
    """The ideal notch term alone (environment set to unity)."""
    f = np.asarray(f, dtype=float)
    return 1.0 - (Q_l / Q_c) * np.exp(1j * phi) / (1.0 + 2j * Q_l * (f / f_r - 1.0))


def s21_model(f, params):
    """Evaluate the full notch model at frequencies ``f`` (Hz)."""
    f = np.asarray(f, dtype=float)
    env = params.a * np.exp(1j * (params.alpha - 2.0 * np.pi * f * params.tau))
    return env * resonator_response(f, params.f_r, params.Q_l, params.Q_c, params.phi)


def frequency_grid(params, n_points=1601, span_linewidths=10.0, center=None):
    """Linear grid of ``span_linewidths`` linewidths centred on f_r."""
    center = params.f_r if center is None else center
    half = 0.5 * span_linewidths * params.linewidth
    return np.linspace(center - half, center + half, n_points)


def synthesize(params, frequencies, meta=None):
    if not params.is_physical:
        raise ValueError(
            "parameters imply a non-positive Q_i: 1/Q_l - cos(phi)/|Q_c| = "
            f"{params.inverse_Q_i:.3e}"
        )
    f = np.asarray(frequencies, dtype=float)
    return FrequencySweep(f, s21_model(f, params), meta=meta or SweepMeta())


def noise_sigma_for_snr(snr_db, amplitude=1.0):
    """Per-quadrature sigma giving 20 log10(amplitude / sigma) = snr_db."""
    return amplitude * 10.0 ** (-snr_db / 20.0)


def add_noise(sweep, sigma, seed):
    """Add circular complex Gaussian noise, ``sigma`` per quadrature.

    Deterministic for a given seed; sigma == 0 returns an identical copy.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma!r}")
    s21 = sweep.s21.copy()
    if sigma > 0:
        rng = np.random.default_rng(seed)
        n = s21.size
        s21 = s21 + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return replace(sweep, frequencies=sweep.frequencies.copy(), s21=s21)
