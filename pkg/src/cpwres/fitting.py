"""Circle-fit extraction of notch resonator parameters from complex S21.

Pipeline (``fit_notch``):

1. remove the electronic delay by minimising the circle residual of
   S21 e^{+2 pi i f tau} over a bracketed 1-D search,
2. fit a circle to the delay-corrected data and translate it to the origin,
3. fit the phase response theta0 + 2 arctan(2 Q_l (1 - f / f_r)) of the
   centred circle for f_r and Q_l,
4. read the off-resonant point, the environment (a, alpha), |Q_c| and phi off
   the circle geometry,
5. refine all seven parameters together by damped least squares on the
   stacked real and imaginary residuals.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.optimize import least_squares

from .errors import DegenerateGeometry, NonConvergence, NoResonanceFound
from .notch import MIN_FIT_POINTS, FrequencySweep, NotchParameters

log = logging.getLogger(__name__)

PARAM_NAMES = ("f_r", "Q_l", "Q_c", "phi", "a", "alpha", "tau")

DELAY_GRID_POINTS = 61
DELAY_EDGE_FRACTION = 0.1
PHASE_FIT_MAX_ITER = 200
REFINE_FD_STEP = 1e-6
NOISE_FLOOR_FACTOR = 5.0
# a resonance inside the window sweeps well over a quarter of its circle
MIN_ARC = 0.5 * math.pi


@dataclass(frozen=True)
class Circle:
    center: complex
    radius: float


@dataclass(frozen=True)
class PhaseFit:
    f_r: float
    Q_l: float
    theta0: float


@dataclass(frozen=True)
class FitQuality:
    residual_rms: float
    n_points: int
    converged: bool


@dataclass(frozen=True)
class NotchFitResult:
    params: NotchParameters
    Q_i: float
    uncertainties: dict = field(default_factory=dict)
    fit_quality: FitQuality = None

    @property
    def converged(self):
        return self.fit_quality.converged

    def as_dict(self):
        p = self.params
        return {
            "f_r": p.f_r,
            "Q_l": p.Q_l,
            "Q_c": p.Q_c,
            "phi": p.phi,
            "a": p.a,
            "alpha": p.alpha,
            "tau": p.tau,
            "Q_i": self.Q_i,
            "uncertainties": dict(self.uncertainties),
            "residual_rms": self.fit_quality.residual_rms,
            "n_points": self.fit_quality.n_points,
            "converged": self.fit_quality.converged,
        }


def _wrap(angle):
    return (np.asarray(angle) + np.pi) % (2.0 * np.pi) - np.pi


def _sorted_arrays(frequencies, values):
    f = np.asarray(frequencies, dtype=float)
    z = np.asarray(values, dtype=complex)
    order = np.argsort(f, kind="stable")
    return f[order], z[order]


def fit_circle(points):
    """Algebraic circle fit (Taubin), solved as a 3x3 singular-value problem.

    Exact for noiseless points on a circle.  Raises DegenerateGeometry for
    fewer than three points or collinear/coincident data.
    """
    z = np.asarray(points, dtype=complex).ravel()
    if z.size < 3:
        raise DegenerateGeometry(f"need at least 3 points, got {z.size}")
    centroid = z.mean()
    w = z - centroid
    scale = np.sqrt(np.mean(np.abs(w) ** 2))
    if not scale > 0:
        raise DegenerateGeometry("all points coincide")
    w = w / scale
    x, y = w.real, w.imag
    zz = x * x + y * y
    zmean = zz.mean()
    z0 = (zz - zmean) / (2.0 * np.sqrt(zmean))
    _, s, vt = np.linalg.svd(np.column_stack((z0, x, y)), full_matrices=False)
    A = vt[-1].copy()
    A[0] = A[0] / (2.0 * np.sqrt(zmean))
    a4 = -zmean * A[0]
    # |A0| -> 0 is the straight-line limit
    if abs(A[0]) < 1e-10 * math.hypot(A[1], A[2]):
        raise DegenerateGeometry("points are collinear")
    xc = -A[1] / (2.0 * A[0])
    yc = -A[2] / (2.0 * A[0])
    radius = math.sqrt(A[1] ** 2 + A[2] ** 2 - 4.0 * A[0] * a4) / (2.0 * abs(A[0]))
    return Circle(center=complex(xc, yc) * scale + centroid, radius=radius * scale)


def circle_residual(points, circle):
    """RMS geometric distance of ``points`` from ``circle``."""
    d = np.abs(np.asarray(points) - circle.center) - circle.radius
    return float(np.sqrt(np.mean(d * d)))


def estimate_noise(values):
    """Per-quadrature noise sigma from robust second differences."""
    z = np.asarray(values, dtype=complex)
    if z.size < 5:
        return 0.0
    d2 = z[2:] - 2.0 * z[1:-1] + z[:-2]
    mad = [np.median(np.abs(c - np.median(c))) for c in (d2.real, d2.imag)]
    return float(1.4826 * np.mean(mad) / math.sqrt(6.0))


def _resonance_depth(z):
    # delay-invariant diameter proxy: range of the smoothed magnitude
    mag = uniform_filter1d(np.abs(z), max(1, z.size // 64), mode="nearest")
    return float(mag.max() - mag.min())


def _edge_delay(f, z, edge_fraction=DELAY_EDGE_FRACTION):
    # common phase slope of the two off-resonant edges, each with its own offset
    n = f.size
    m = max(3, int(round(edge_fraction * n)))
    phase = np.unwrap(np.angle(z))
    idx = np.r_[0:m, n - m:n]
    left = np.zeros(n)
    left[:m] = 1.0
    design = np.column_stack((left[idx], 1.0 - left[idx], f[idx] - f.mean()))
    coef, *_ = np.linalg.lstsq(design, phase[idx], rcond=None)
    return -coef[2] / (2.0 * np.pi)


def _delay_cost(f, z, tau):
    zc = z * np.exp(2j * np.pi * f * tau)
    try:
        return circle_residual(zc, fit_circle(zc))
    except DegenerateGeometry:
        return math.inf


def _golden_section(func, lo, hi, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = func(c), func(d)
    while abs(hi - lo) > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = func(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = func(d)
    return 0.5 * (lo + hi)


def _check_resonance(z, sigma):
    depth = _resonance_depth(z)
    floor = max(NOISE_FLOOR_FACTOR * sigma, 1e-12 * float(np.median(np.abs(z))))
    if depth <= floor:
        raise NoResonanceFound(
            f"resonance depth {depth:.3g} is below the noise floor {floor:.3g}"
        )


def estimate_delay(frequencies, s21=None, *, grid_points=DELAY_GRID_POINTS):
    """Electronic delay tau (s) minimising the circle residual of S21 e^{2 pi i f tau}.

    Accepts a FrequencySweep or (frequencies, s21) arrays.  The search starts
    from the common phase slope of the off-resonant edges, scans a bracket of
    +/- half a phase turn across the span on a grid, then refines the best
    grid cell by golden-section search.
    """
    if isinstance(frequencies, FrequencySweep):
        f, z = frequencies.frequencies, frequencies.s21
    else:
        f, z = _sorted_arrays(frequencies, s21)
    span = f[-1] - f[0]
    tau0 = _edge_delay(f, z)
    # a fast-rotating baseline would otherwise masquerade as noise
    sigma = estimate_noise(z * np.exp(2j * np.pi * f * tau0))
    _check_resonance(z, sigma)
    half = 0.5 / span
    grid = np.linspace(tau0 - half, tau0 + half, grid_points)
    costs = np.array([_delay_cost(f, z, t) for t in grid])
    i = int(np.argmin(costs))
    step = grid[1] - grid[0]
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid_points - 1)]
    tau = _golden_section(lambda t: _delay_cost(f, z, t), lo, hi, 1e-6 * step)

    corrected = z * np.exp(2j * np.pi * f * tau)
    circle = fit_circle(corrected)
    sigma = estimate_noise(corrected)
    if 2.0 * circle.radius <= NOISE_FLOOR_FACTOR * sigma:
        raise NoResonanceFound(
            f"circle diameter {2 * circle.radius:.3g} is below 5 sigma = {5 * sigma:.3g}"
        )
    return float(tau)


def phase_model(f, f_r, Q_l, theta0):
    return theta0 + 2.0 * np.arctan(2.0 * Q_l * (1.0 - np.asarray(f) / f_r))


def _crossing(f, theta, level, near):
    # frequency where the (decreasing) phase crosses ``level``, closest to ``near``
    s = theta - level
    idx = np.nonzero(np.signbit(s[:-1]) != np.signbit(s[1:]))[0]
    if idx.size == 0:
        return None
    roots = f[idx] - s[idx] * (f[idx + 1] - f[idx]) / (s[idx + 1] - s[idx])
    return float(roots[np.argmin(np.abs(roots - near))])


def _phase_guess(f, theta, f_hint=None):
    n = f.size
    m = max(2, n // 20)
    mid = 0.5 * (np.mean(theta[:m]) + np.mean(theta[-m:]))
    if f_hint is None:
        smooth = uniform_filter1d(theta, max(1, n // 100), mode="nearest")
        f_hint = f[int(np.argmax(np.abs(np.gradient(smooth, f))))]
    f_r = _crossing(f, theta, mid, f_hint) or f_hint
    lo = _crossing(f, theta, mid + 0.5 * np.pi, f_r)
    hi = _crossing(f, theta, mid - 0.5 * np.pi, f_r)
    if lo is not None and hi is not None and hi > lo:
        Q_l = f_r / (hi - lo)
    else:
        slope = np.gradient(theta, f)[int(np.argmin(np.abs(f - f_r)))]
        Q_l = max(abs(slope) * f_r / 4.0, 1.0)
    return f_r, Q_l, mid


def fit_phase(frequencies, centered, *, guess=None, f_hint=None, max_iter=PHASE_FIT_MAX_ITER):
    """Fit theta(f) = theta0 + 2 arctan(2 Q_l (1 - f/f_r)) to origin-centred data.

    ``centered`` is complex data whose circle is centred at the origin.
    Returns a PhaseFit; raises NonConvergence when the iteration cap is hit.
    """
    f, z = _sorted_arrays(frequencies, centered)
    theta = np.unwrap(np.angle(z))
    if guess is None:
        f_r0, Q_l0, theta0 = _phase_guess(f, theta, f_hint)
    else:
        f_r0, Q_l0, theta0 = guess
    lw = f_r0 / Q_l0

    def unpack(x):
        return f_r0 + x[0] * lw, Q_l0 * math.exp(x[1]), theta0 + x[2]

    def residuals(x):
        f_r, Q_l, th = unpack(x)
        return _wrap(theta - phase_model(f, f_r, Q_l, th))

    res = least_squares(residuals, np.zeros(3), method="lm", max_nfev=max_iter * 4)
    if res.status == 0:
        raise NonConvergence(f"phase fit did not converge within {max_iter} iterations")
    f_r, Q_l, th = unpack(res.x)
    if not f[0] <= f_r <= f[-1]:
        raise NoResonanceFound(f"phase fit placed f_r = {f_r:.6g} Hz outside the sweep")
    return PhaseFit(f_r=f_r, Q_l=Q_l, theta0=float(_wrap(th)))


class _Refiner:
    """Least-squares problem in decorrelated, well-scaled coordinates.

    x = [(f_r - f_mid)/lw, ln Q_l, ln Q_c, phi, ln a, alpha_mid, 2 pi span tau]
    where f_mid is the centre of the sweep and alpha_mid the environment phase
    there.  Detunings are formed from f - f_mid so that no precision is lost
    to cancellation near resonance.
    """

    def __init__(self, f, z, start):
        self.f, self.z = f, z
        self.f_mid = 0.5 * (f[0] + f[-1])
        self.df = f - self.f_mid
        self.span = f[-1] - f[0]
        self.lw = start.f_r / start.Q_l
        self.x0 = np.array([
            (start.f_r - self.f_mid) / self.lw,
            math.log(start.Q_l),
            math.log(start.Q_c),
            start.phi,
            math.log(start.a),
            float(_wrap(start.alpha - 2.0 * math.pi * self.f_mid * start.tau)),
            2.0 * math.pi * self.span * start.tau,
        ])

    def physical(self, x):
        tau = x[6] / (2.0 * math.pi * self.span)
        alpha = float(_wrap(x[5] + 2.0 * math.pi * self.f_mid * tau))
        return (self.f_mid + x[0] * self.lw, math.exp(x[1]), math.exp(x[2]),
                x[3], math.exp(x[4]), alpha, tau)

    def _parts(self, x):
        f_r, Q_l, Q_c, phi, a, _, _ = self.physical(x)
        env = a * np.exp(1j * (x[5] - x[6] * self.df / self.span))
        den = 1.0 + 2j * Q_l * (self.df - x[0] * self.lw) / f_r
        g = (Q_l / Q_c) * np.exp(1j * phi) / den
        return f_r, Q_l, env, den, g

    def model(self, x):
        _, _, env, _, g = self._parts(x)
        return env * (1.0 - g)

    def residuals(self, x):
        d = self.model(x) - self.z
        return np.concatenate((d.real, d.imag))

    def jacobian_complex(self, x):
        """Analytic d model / d x, one complex column per coordinate."""
        f_r, Q_l, env, den, g = self._parts(x)
        full = env * (1.0 - g)
        cols = [
            # -g' = g den'/den with d den/d f_r = -2i Q_l f / f_r^2
            env * (-g * (2j * Q_l * self.f / f_r ** 2) / den) * self.lw,
            # Q_l d/dQ_l of -g
            env * (-g * (1.0 - (den - 1.0) / den)),
            env * g,
            env * (-1j * g),
            full,
            1j * full,
            -1j * self.df / self.span * full,
        ]
        return np.column_stack(cols)

    def jacobian(self, x):
        J = self.jacobian_complex(x)
        return np.vstack((J.real, J.imag))

    def covariance(self, x):
        """Covariance of the physical parameters from the linearised model."""
        J = self.jacobian(x)
        r = self.residuals(x)
        dof = max(r.size - x.size, 1)
        s2 = float(r @ r) / dof
        norms = np.linalg.norm(J, axis=0)
        norms[norms == 0] = 1.0
        Js = J / norms
        cov_x = np.linalg.pinv(Js.T @ Js) / np.outer(norms, norms) * s2
        f_r, Q_l, Q_c, phi, a, alpha, tau = self.physical(x)
        T = np.zeros((7, 7))
        T[0, 0] = self.lw
        T[1, 1] = Q_l
        T[2, 2] = Q_c
        T[3, 3] = 1.0
        T[4, 4] = a
        T[5, 5] = 1.0
        T[5, 6] = self.f_mid / self.span
        T[6, 6] = 1.0 / (2.0 * math.pi * self.span)
        return T @ cov_x @ T.T


def _initial_estimate(f, z):
    tau = estimate_delay(f, z)
    zc = z * np.exp(2j * np.pi * f * tau)
    circle = fit_circle(zc)
    arc = np.ptp(np.unwrap(np.angle(zc - circle.center)))
    if arc < MIN_ARC:
        raise NoResonanceFound(
            f"data cover only {np.degrees(arc):.1f} degrees of the resonance circle; "
            "f_r is likely outside the sweep"
        )
    # deepest dip of the magnitude breaks ties between several features
    mag = uniform_filter1d(np.abs(zc), max(1, f.size // 200), mode="nearest")
    f_hint = float(f[int(np.argmin(mag))])
    try:
        ph = fit_phase(f, zc - circle.center, f_hint=f_hint)
    except NonConvergence:
        theta = np.unwrap(np.angle(zc - circle.center))
        ph = PhaseFit(*_phase_guess(f, theta, f_hint))
        log.warning("phase fit did not converge; continuing from its initial guess")
    offres = circle.center + circle.radius * np.exp(1j * (ph.theta0 + np.pi))
    a = abs(offres)
    alpha = float(np.angle(offres))
    r_norm = circle.radius / a
    phi = float(np.angle((offres - circle.center) / offres))
    phi = float(np.clip(phi, -0.49 * np.pi, 0.49 * np.pi))
    Q_c = ph.Q_l / (2.0 * r_norm)
    return NotchParameters(f_r=ph.f_r, Q_l=ph.Q_l, Q_c=Q_c, phi=phi, a=a, alpha=alpha, tau=tau)


def _q_i_sigma(p, cov):
    inv = p.inverse_Q_i
    if inv == 0:
        return math.inf
    q_i = 1.0 / inv
    # dQ_i/dQ_l, dQ_i/dQ_c, dQ_i/dphi
    grad = np.zeros(7)
    grad[1] = q_i * q_i / (p.Q_l * p.Q_l)
    grad[2] = -q_i * q_i * math.cos(p.phi) / (p.Q_c * p.Q_c)
    grad[3] = -q_i * q_i * math.sin(p.phi) / p.Q_c
    var = float(grad @ cov @ grad)
    return math.sqrt(var) if var >= 0 else math.nan


def fit_notch(sweep, *, jacobian="fd", max_iter=200):
    """Extract (f_r, Q_l, |Q_c|, phi, a, alpha, tau) and Q_i from a notch trace.

    ``jacobian`` selects finite differences (``"fd"``, relative step 1e-6) or
    the analytic Jacobian (``"analytic"``) for the final refinement.  Raises
    NoResonanceFound for traces without a resolvable resonance; refinement
    failures are reported through ``fit_quality.converged`` with the best
    available estimate.
    """
    f, z = sweep.frequencies, sweep.s21
    if f.size < MIN_FIT_POINTS:
        raise ValueError(f"need at least {MIN_FIT_POINTS} points, got {f.size}")
    start = _initial_estimate(f, z)

    prob = _Refiner(f, z, start)
    kwargs = {"method": "lm", "max_nfev": max_iter * 8, "ftol": 1e-10, "xtol": 1e-10}
    if jacobian == "analytic":
        kwargs["jac"] = prob.jacobian
    elif jacobian == "fd":
        kwargs["diff_step"] = REFINE_FD_STEP
    else:
        raise ValueError(f"jacobian must be 'fd' or 'analytic', got {jacobian!r}")
    try:
        with np.errstate(all="ignore"):
            res = least_squares(prob.residuals, prob.x0, **kwargs)
        x, ok = res.x, bool(res.success)
    except (ZeroDivisionError, OverflowError, ValueError) as exc:
        log.warning("refinement diverged (%s); reporting the circle-fit estimate", exc)
        x, ok = prob.x0, False

    f_r, Q_l, Q_c, phi, a, alpha, tau = prob.physical(x)
    if not all(map(math.isfinite, (f_r, Q_l, Q_c, a, alpha, tau))):
        x, ok = prob.x0, False
        f_r, Q_l, Q_c, phi, a, alpha, tau = prob.physical(x)
    ok = ok and abs(phi) < 0.5 * math.pi
    phi = float(np.clip(phi, -0.4999 * math.pi, 0.4999 * math.pi))
    if not f[0] <= f_r <= f[-1]:
        raise NoResonanceFound(f"fitted f_r = {f_r:.6g} Hz lies outside the sweep")
    params = NotchParameters(f_r=f_r, Q_l=Q_l, Q_c=Q_c, phi=phi, a=a, alpha=alpha, tau=tau)
    ok = ok and params.is_physical

    cov = prob.covariance(x)
    sig = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    unc = {name: float(s) for name, s in zip(PARAM_NAMES, sig)}
    unc["Q_i"] = _q_i_sigma(params, cov)
    rms = float(np.sqrt(np.mean(np.abs(prob.model(x) - z) ** 2)))
    return NotchFitResult(
        params=params,
        Q_i=params.Q_i,
        uncertainties=unc,
        fit_quality=FitQuality(residual_rms=rms, n_points=int(f.size), converged=ok),
    )
