"""
Classical post-processing of the impurity Green's function.

Time series are fitted to the particle-hole symmetric two-pole form

    iG_ret(t) = 2 [alpha1 cos(omega1 t) + alpha2 cos(omega2 t)]

whose broadened transform is

    G(w) = sum_j alpha_j [1/(w + i delta - omega_j) + 1/(w + i delta + omega_j)]

From G and the bare G0 the self-energy follows by Dyson's equation, and the
quasiparticle weight Z is estimated four ways: the slope of Re Sigma at
w = 0, the weight of the innermost spectral peaks, a Kramers-Kronig
integral over Im Sigma, and an extrapolation of the imaginary-frequency
weight at fictitious temperatures.
"""

import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy.integrate import trapezoid
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from .greens import GreensSeries
from .model import AimParameters
from .output import write_csv

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 0.1
DEFAULT_OMEGA_MIN = -8.0
DEFAULT_OMEGA_MAX = 8.0
DEFAULT_OMEGA_STEP = 0.005
MIN_FIT_POINTS = 5
FIT_GRID = 16
TINY = 1e-300
WEIGHT_TOL = 1e-9
QP_BOUND_SLACK = 2.0


class AnalysisError(Exception):
    """Raised when post-processing cannot produce a result."""
    pass


class ZMethod(Enum):
    DERIVATIVE = "derivative"
    SPECTRAL = "spectral"
    KRAMERS_KRONIG = "kramers_kronig"
    MATSUBARA = "matsubara"


@dataclass
class FitParams:
    """Two-pole fit; omega1 carries the larger |alpha|."""
    alpha1: float
    alpha2: float
    omega1: float
    omega2: float
    residual: float = 0.0
    flagged: bool = False
    note: str = ""

    def poles(self) -> List[Tuple[float, float]]:
        """(alpha, omega) pairs with non-negligible weight."""
        return [(a, w) for a, w in ((self.alpha1, self.omega1), (self.alpha2, self.omega2))
                if abs(a) > WEIGHT_TOL]

    def evaluate(self, times: npt.ArrayLike) -> npt.NDArray[np.float64]:
        t = np.asarray(times, dtype=float)
        return 2.0 * (self.alpha1 * np.cos(self.omega1 * t) + self.alpha2 * np.cos(self.omega2 * t))

    def to_dict(self) -> Dict[str, Union[float, bool, str]]:
        return asdict(self)


@dataclass
class SpectralGrid:
    """Function sampled on a uniform real-frequency grid."""
    omegas: npt.NDArray[np.float64]
    values: npt.NDArray
    delta: float
    flags: Optional[npt.NDArray[np.bool_]] = None

    def __post_init__(self) -> None:
        self.omegas = np.asarray(self.omegas, dtype=float)
        self.values = np.asarray(self.values)
        if self.omegas.ndim != 1 or self.omegas.size < 2:
            raise AnalysisError("Frequency grid needs at least two points")
        if np.any(np.diff(self.omegas) <= 0):
            raise AnalysisError("Frequency grid must be strictly increasing")
        if self.values.shape != self.omegas.shape:
            raise AnalysisError(f"Grid/value shape mismatch: {self.omegas.shape} vs {self.values.shape}")
        if self.delta < 0:
            raise AnalysisError(f"Broadening must be non-negative, got {self.delta}")
        if self.flags is None:
            self.flags = np.zeros(self.omegas.shape, dtype=bool)

    @property
    def step(self) -> float:
        return float(self.omegas[1] - self.omegas[0])

    def zero_index(self) -> int:
        """Index of the grid point at w = 0."""
        idx = int(np.argmin(np.abs(self.omegas)))
        if abs(self.omegas[idx]) > 0.5 * self.step + 1e-12:
            raise AnalysisError("Frequency grid does not contain w = 0")
        return idx


@dataclass(frozen=True)
class EffectiveChemicalPotential:
    """
    The chemical potential entering the bare Green's function.

    Equal to eps0 - mu of the model, so U/2 at half filling; it is not the
    model's mu.
    """
    mu_eff: float

    @classmethod
    def from_parameters(cls, p: AimParameters) -> "EffectiveChemicalPotential":
        return cls(p.mu_eff)


@dataclass
class QpEstimate:
    """Quasiparticle weight clamped to [0, 1]; raw keeps the unclamped value."""
    z: float
    raw: float
    method: ZMethod
    flagged: bool = False
    note: str = ""


@dataclass
class SpectralAnalysis:
    """Real-frequency quantities derived from one fit."""
    g: SpectralGrid
    g0: SpectralGrid
    sigma: SpectralGrid
    spectral: SpectralGrid


@dataclass
class MatsubaraResult:
    temperatures: npt.NDArray[np.float64]
    g: npt.NDArray[np.complex128]
    g0: npt.NDArray[np.complex128]
    sigma: npt.NDArray[np.complex128]
    z_of_t: npt.NDArray[np.float64]
    valid: npt.NDArray[np.bool_]
    estimate: Optional[QpEstimate] = None


def frequency_grid(omega_min: float = DEFAULT_OMEGA_MIN, omega_max: float = DEFAULT_OMEGA_MAX,
                   step: float = DEFAULT_OMEGA_STEP) -> npt.NDArray[np.float64]:
    if step <= 0 or omega_max <= omega_min:
        raise AnalysisError(f"Invalid grid [{omega_min}, {omega_max}] with step {step}")
    n = int(round((omega_max - omega_min) / step)) + 1
    return np.linspace(omega_min, omega_max, n)


# Fitting


def _two_pole_residuals(x: npt.NDArray[np.float64], t: npt.NDArray[np.float64],
                        y: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    a1, a2, w1, w2 = x
    return 2.0 * (a1 * np.cos(w1 * t) + a2 * np.cos(w2 * t)) - y


def _two_pole_jacobian(x: npt.NDArray[np.float64], t: npt.NDArray[np.float64],
                       y: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    a1, a2, w1, w2 = x
    return np.column_stack([
        2.0 * np.cos(w1 * t),
        2.0 * np.cos(w2 * t),
        -2.0 * a1 * t * np.sin(w1 * t),
        -2.0 * a2 * t * np.sin(w2 * t),
    ])


def _one_pole_residuals(x: npt.NDArray[np.float64], t: npt.NDArray[np.float64],
                        y: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    return 2.0 * x[0] * np.cos(x[1] * t) - y


def _one_pole_jacobian(x: npt.NDArray[np.float64], t: npt.NDArray[np.float64],
                       y: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    return np.column_stack([2.0 * np.cos(x[1] * t), -2.0 * x[0] * t * np.sin(x[1] * t)])


def _linear_weights(t: npt.NDArray[np.float64], y: npt.NDArray[np.float64],
                    omegas: Sequence[float]) -> npt.NDArray[np.float64]:
    design = 2.0 * np.cos(np.outer(t, omegas))
    weights, *_ = np.linalg.lstsq(design, y, rcond=None)
    return weights


def _periodogram_peaks(t: npt.NDArray[np.float64], y: npt.NDArray[np.float64],
                       omega_max: float, count: int = 4) -> List[float]:
    scan = np.linspace(0.0, omega_max, 512)
    power = np.abs(np.cos(np.outer(scan, t)) @ y)
    peaks, _ = find_peaks(np.concatenate([[0.0], power, [0.0]]))
    peaks = peaks - 1
    ranked = sorted(peaks, key=lambda i: -power[i])[:count]
    return [float(np.clip(scan[i], 1e-6, omega_max - 1e-6)) for i in ranked]


def _rms(residuals: npt.NDArray[np.float64]) -> float:
    return float(np.sqrt(np.mean(residuals**2)))


def _better(residual: float, omega1: float, best: Optional[Tuple[float, float]]) -> bool:
    if best is None:
        return True
    if residual < best[0] - 1e-14:
        return True
    return abs(residual - best[0]) <= 1e-14 and omega1 < best[1]


def _ordered(a1: float, a2: float, w1: float, w2: float) -> Tuple[float, float, float, float]:
    if abs(a2) > abs(a1):
        return a2, a1, w2, w1
    return a1, a2, w1, w2


def fit_time_series(series: Union[GreensSeries, Tuple[npt.ArrayLike, npt.ArrayLike]],
                    dt: Optional[float] = None) -> FitParams:
    """
    Least-squares two-pole fit of iG_ret(t) inside the Nyquist window [0, pi/dt].

    Starts come from a 16x16 frequency grid (unordered pairs only) plus the
    strongest periodogram peaks, with weights seeded by linear least squares.
    A single-pole fit replaces the two-pole one when it is equally good, and
    a collapsed pair (omega1 ~ omega2) is merged into a single pole.

    Args:
        series: GreensSeries, or a (times, values) pair
        dt: Sample spacing; taken from the series when omitted

    Returns:
        FitParams of the global best start
    """
    if isinstance(series, tuple):
        times, values = series
    else:
        times, values = series.times, series.ig_retarded
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.size < MIN_FIT_POINTS:
        raise AnalysisError(f"Fit needs at least {MIN_FIT_POINTS} time points, got {t.size}")
    if dt is None:
        dt = float(t[1] - t[0])
    if dt <= 0:
        raise AnalysisError(f"dt must be positive, got {dt}")
    omega_max = math.pi / dt

    grid = list(np.linspace(0.0, omega_max, FIT_GRID + 2)[1:-1])
    peaks = _periodogram_peaks(t, y, omega_max)
    starts = {(grid[i], grid[j]) for i in range(FIT_GRID) for j in range(i, FIT_GRID)}
    starts |= {(min(a, b), max(a, b)) for a in peaks for b in peaks + grid[::4]}

    opts = dict(xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
    lower2, upper2 = [-np.inf, -np.inf, 0.0, 0.0], [np.inf, np.inf, omega_max, omega_max]
    best2: Optional[Tuple[float, float]] = None
    params2 = None
    for w1, w2 in sorted(starts):
        a1, a2 = _linear_weights(t, y, [w1, w2])
        try:
            out = least_squares(_two_pole_residuals, [a1, a2, w1, w2], jac=_two_pole_jacobian,
                                bounds=(lower2, upper2), args=(t, y), **opts)
        except ValueError as e:
            logger.debug(f"Fit start ({w1:.3f}, {w2:.3f}) failed: {e}")
            continue
        ordered = _ordered(*out.x)
        res = _rms(out.fun)
        if _better(res, ordered[2], best2):
            best2, params2 = (res, ordered[2]), ordered

    best1: Optional[Tuple[float, float]] = None
    params1 = None
    for w in sorted(set(grid) | set(peaks)):
        a = _linear_weights(t, y, [w])[0]
        out = least_squares(_one_pole_residuals, [a, w], jac=_one_pole_jacobian,
                            bounds=([-np.inf, 0.0], [np.inf, omega_max]), args=(t, y), **opts)
        res = _rms(out.fun)
        if _better(res, out.x[1], best1):
            best1, params1 = (res, out.x[1]), tuple(out.x)

    if params2 is None and params1 is None:
        return FitParams(0.0, 0.0, 0.0, 0.0, float("inf"), flagged=True, note="no fit start converged")
    if params2 is None or (params1 is not None and best1[0] <= best2[0] + 1e-10):
        a, w = params1
        return FitParams(float(a), 0.0, float(w), 0.0, best1[0])

    a1, a2, w1, w2 = (float(v) for v in params2)
    if abs(w1 - w2) < 1e-6 * max(1.0, w1):
        return FitParams(a1 + a2, 0.0, w1, 0.0, best2[0], note="collapsed degenerate frequencies")
    return FitParams(a1, a2, w1, w2, best2[0])


# Real-frequency Green's functions


def greens_frequency(fit: FitParams, omegas: npt.ArrayLike, delta: float = DEFAULT_DELTA) -> SpectralGrid:
    if delta <= 0:
        raise AnalysisError(f"Broadening must be positive, got {delta}")
    w = np.asarray(omegas, dtype=float)
    z = w + 1j * delta
    g = np.zeros(w.shape, dtype=complex)
    for alpha, omega in ((fit.alpha1, fit.omega1), (fit.alpha2, fit.omega2)):
        if alpha != 0.0:
            g += alpha * (1.0 / (z - omega) + 1.0 / (z + omega))
    return SpectralGrid(w, g, delta)


def bare_greens(mu_eff: float, v: float, eps1_minus_mu: float, omegas: npt.ArrayLike,
                delta: float = DEFAULT_DELTA) -> SpectralGrid:
    """
    G0(w) = 1 / (w + i delta + mu_eff - V^2 / (w + i delta - (eps1 - mu))).

    Points sitting exactly on a pole (possible only for delta = 0) are
    flagged and hold NaN.
    """
    if delta < 0:
        raise AnalysisError(f"Broadening must be non-negative, got {delta}")
    w = np.asarray(omegas, dtype=float)
    z = w + 1j * delta
    flags = np.zeros(w.shape, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        inverse = z + mu_eff
        if v != 0.0:
            bath = z - eps1_minus_mu
            flags |= np.abs(bath) < TINY
            inverse = inverse - v**2 / bath
        flags |= np.abs(inverse) < TINY
        g0 = 1.0 / inverse
    g0[flags] = np.nan
    if flags.any():
        logger.warning(f"Bare Green's function hits {int(flags.sum())} exact pole(s) on the grid")
    return SpectralGrid(w, g0, delta, flags)


def self_energy(g0: SpectralGrid, g: SpectralGrid) -> SpectralGrid:
    """Dyson equation Sigma = 1/G0 - 1/G; vanishing G or G0 points are flagged."""
    if g0.omegas.shape != g.omegas.shape or not np.allclose(g0.omegas, g.omegas, rtol=0, atol=1e-12):
        raise AnalysisError("Self-energy needs G and G0 on the same grid")
    flags = g0.flags | g.flags | (np.abs(g0.values) < TINY) | (np.abs(g.values) < TINY)
    flags |= ~np.isfinite(g0.values) | ~np.isfinite(g.values)
    sigma = np.full(g.omegas.shape, np.nan, dtype=complex)
    ok = ~flags
    sigma[ok] = 1.0 / g0.values[ok] - 1.0 / g.values[ok]
    return SpectralGrid(g.omegas, sigma, g.delta, flags)


def spectral_function(g: SpectralGrid) -> SpectralGrid:
    return SpectralGrid(g.omegas, -np.imag(g.values) / np.pi, g.delta, g.flags.copy())


def spectral_analysis(fit: FitParams, p: AimParameters, omegas: Optional[npt.ArrayLike] = None,
                      delta: float = DEFAULT_DELTA) -> SpectralAnalysis:
    """G, G0, Sigma and A(w) for a fit at the model's hybridization."""
    w = frequency_grid() if omegas is None else np.asarray(omegas, dtype=float)
    g = greens_frequency(fit, w, delta)
    g0 = bare_greens(EffectiveChemicalPotential.from_parameters(p).mu_eff, p.v, p.eps1_minus_mu, w, delta)
    return SpectralAnalysis(g, g0, self_energy(g0, g), spectral_function(g))


# Quasiparticle weight


def _clamped(raw: float, method: ZMethod, note: str = "") -> QpEstimate:
    if not math.isfinite(raw):
        return QpEstimate(0.0 if raw != math.inf else 1.0, raw, method, True, note or "non-finite estimate")
    z = min(max(raw, 0.0), 1.0)
    flagged = z != raw
    if flagged and not note:
        note = f"raw Z={raw:.6g} outside [0, 1]"
    return QpEstimate(z, raw, method, flagged, note)


def qp_weight_from_slope(slope: float, method: ZMethod, note: str = "") -> QpEstimate:
    """Z = 1 / (1 - dRe Sigma/dw at 0)."""
    raw = math.inf if slope == 1.0 else 1.0 / (1.0 - slope)
    return _clamped(raw, method, note)


def qp_weight_derivative(sigma: SpectralGrid, h_steps: int = 2) -> QpEstimate:
    """
    Central difference of Re Sigma at w = 0 with spacing h = h_steps grid steps.

    Flagged points are skipped by widening the stencil one step at a time.
    """
    i0 = sigma.zero_index()
    n = sigma.omegas.size
    for h in range(h_steps, h_steps + 10):
        lo, hi = i0 - h, i0 + h
        if lo < 0 or hi >= n:
            break
        if sigma.flags[lo] or sigma.flags[hi]:
            continue
        slope = (sigma.values[hi].real - sigma.values[lo].real) / (sigma.omegas[hi] - sigma.omegas[lo])
        note = "" if h == h_steps else f"stencil widened to {h} steps"
        estimate = qp_weight_from_slope(float(slope), ZMethod.DERIVATIVE, note)
        estimate.flagged = estimate.flagged or h != h_steps
        return estimate
    return QpEstimate(0.0, math.nan, ZMethod.DERIVATIVE, True, "no valid points around w = 0")


def quasiparticle_frequency_bound(v: float) -> float:
    """
    Largest frequency at which a pole can still be the quasiparticle pole.

    The two positive poles of the half-filled two-site model satisfy
    omega_inner * omega_outer = 3 V^2, so omega_inner <= sqrt(3) V; the bound
    allows a factor QP_BOUND_SLACK on top for Trotter and shot noise.
    """
    return QP_BOUND_SLACK * math.sqrt(3.0) * max(v, 0.0)


def qp_weight_spectral(source: Union[SpectralGrid, FitParams], v: float = 0.0) -> QpEstimate:
    """
    Weight of the two spectral peaks nearest w = 0.

    For a fit this is 2 alpha of the inner pole. A pole only counts as the
    quasiparticle pole when it lies within quasiparticle_frequency_bound(v);
    otherwise the innermost pole is a Hubbard peak (or a noise satellite of
    one) and Z = 0 with a flag. At v = 0 this is the atomic limit.

    For a sampled A(w) each inner peak is integrated over a window of half
    the distance to its nearest neighbouring peak on either side.
    """
    method = ZMethod.SPECTRAL
    bound = quasiparticle_frequency_bound(v)
    if isinstance(source, FitParams):
        poles = source.poles()
        if not poles:
            return QpEstimate(0.0, 0.0, method, True, "no spectral weight")
        omega_inner = min(w for _, w in poles)
        if omega_inner > bound:
            return QpEstimate(0.0, 0.0, method, True,
                              f"innermost pole at {omega_inner:.4g} beyond quasiparticle bound {bound:.4g}")
        distinct = {round(w, 9) for _, w in poles}
        if len(distinct) == 1:
            return _clamped(2.0 * sum(a for a, _ in poles), method)
        alpha_inner, _ = min(poles, key=lambda pole: pole[1])
        return _clamped(2.0 * alpha_inner, method)

    a = np.where(source.flags, 0.0, np.nan_to_num(source.values.real))
    peaks, _ = find_peaks(a)
    if peaks.size == 0:
        return QpEstimate(0.0, 0.0, method, True, "no resolvable peaks")
    positions = source.omegas[peaks]
    if peaks.size <= 2 and v <= 0.0:
        return QpEstimate(0.0, 0.0, method, True, "single peak pair without bath: no quasiparticle peak")
    if float(np.min(np.abs(positions))) > bound:
        return QpEstimate(0.0, 0.0, method, True, f"no peak within quasiparticle bound {bound:.4g}")
    negative = [i for i in range(peaks.size) if positions[i] < 0]
    positive = [i for i in range(peaks.size) if positions[i] >= 0]
    inner = []
    if negative:
        inner.append(max(negative, key=lambda i: positions[i]))
    if positive:
        inner.append(min(positive, key=lambda i: positions[i]))
    weight = 0.0
    for i in inner:
        others = np.delete(positions, i)
        if others.size == 0:
            half_width = abs(positions[i])
        else:
            half_width = 0.5 * float(np.min(np.abs(others - positions[i])))
        mask = np.abs(source.omegas - positions[i]) <= half_width
        weight += float(trapezoid(a[mask], source.omegas[mask]))
    note = "" if len(inner) == 2 else "only one inner peak resolved"
    estimate = _clamped(weight, method, note)
    estimate.flagged = estimate.flagged or len(inner) != 2
    return estimate


def qp_weight_kramers_kronig(sigma: SpectralGrid, pv_window_steps: int = 3,
                             edge_ratio: float = 1e-3) -> QpEstimate:
    """
    dRe Sigma/dw at 0 from Im Sigma via Kramers-Kronig:

        (1/pi) FP int Im Sigma(w') / w'^2 dw'

    The finite-part integral excludes |w'| < pv_window_steps grid steps and
    adds the boundary term -2 Im Sigma(0) / window.
    """
    method = ZMethod.KRAMERS_KRONIG
    i0 = sigma.zero_index()
    w = sigma.omegas
    valid = ~sigma.flags & np.isfinite(sigma.values)
    if valid.sum() < 4:
        return QpEstimate(0.0, math.nan, method, True, "too few valid self-energy points")
    im = np.interp(w, w[valid], sigma.values[valid].imag)

    flagged, note = False, ""
    peak = float(np.max(np.abs(im)))
    if peak > 0 and max(abs(im[0]), abs(im[-1])) >= edge_ratio * peak:
        flagged, note = True, "Im Sigma has not decayed at the grid edges"

    window = pv_window_steps * sigma.step
    outer = np.abs(w) >= window - 1e-12
    left = outer & (w < 0)
    right = outer & (w > 0)
    integral = 0.0
    for mask in (left, right):
        if mask.sum() >= 2:
            integral += float(trapezoid(im[mask] / w[mask] ** 2, w[mask]))
    integral -= 2.0 * im[i0] / window
    estimate = qp_weight_from_slope(integral / np.pi, method, note)
    estimate.flagged = estimate.flagged or flagged
    return estimate


def matsubara_frequency(temperature: float, n: int = 0) -> float:
    return (2 * n + 1) * math.pi * temperature


def matsubara_greens(fit: FitParams, temperature: float, n: int = 0) -> complex:
    """Two-pole G at the Matsubara frequency w_n = (2n+1) pi T."""
    if temperature <= 0:
        raise AnalysisError(f"Temperature must be positive, got {temperature}")
    iw = 1j * matsubara_frequency(temperature, n)
    g = 0.0 + 0.0j
    for alpha, omega in ((fit.alpha1, fit.omega1), (fit.alpha2, fit.omega2)):
        g += alpha * (1.0 / (iw - omega) + 1.0 / (iw + omega))
    return complex(g)


def bare_matsubara(mu_eff: float, v: float, eps1_minus_mu: float, temperature: float, n: int = 0) -> complex:
    iw = 1j * matsubara_frequency(temperature, n)
    inverse = iw + mu_eff
    if v != 0.0:
        inverse -= v**2 / (iw - eps1_minus_mu)
    return complex(1.0 / inverse)


def qp_weight_matsubara(fit: FitParams, temperatures: Sequence[float], mu_eff: float, v: float,
                        eps1_minus_mu: float = 0.0, n_extrapolate: int = 5) -> MatsubaraResult:
    """
    Z(T) = 1 / (1 - Im Sigma(i pi T) / (pi T)), extrapolated to T = 0 by a
    quadratic fit over the lowest valid temperatures.

    Raises:
        AnalysisError: On non-positive temperatures or fewer than 3 valid points
    """
    temps = np.asarray(temperatures, dtype=float)
    if temps.size == 0 or np.any(temps <= 0):
        raise AnalysisError("Temperatures must be strictly positive")
    g = np.array([matsubara_greens(fit, T) for T in temps])
    g0 = np.array([bare_matsubara(mu_eff, v, eps1_minus_mu, T) for T in temps])
    valid = (np.abs(g) > TINY) & (np.abs(g0) > TINY) & np.isfinite(g) & np.isfinite(g0)
    sigma = np.full(temps.shape, np.nan, dtype=complex)
    sigma[valid] = 1.0 / g0[valid] - 1.0 / g[valid]
    z_of_t = np.full(temps.shape, np.nan)
    z_of_t[valid] = 1.0 / (1.0 - sigma[valid].imag / (np.pi * temps[valid]))
    if valid.sum() < 3:
        raise AnalysisError(f"Only {int(valid.sum())} valid temperatures; need at least 3")

    order = np.argsort(temps[valid])[:n_extrapolate]
    t_fit = temps[valid][order]
    z_fit = z_of_t[valid][order]
    coeffs = np.polyfit(t_fit, z_fit, 2)
    estimate = _clamped(float(coeffs[-1]), ZMethod.MATSUBARA)
    dropped = int((~valid).sum())
    if dropped:
        estimate.flagged = True
        estimate.note = (estimate.note + "; " if estimate.note else "") + f"{dropped} temperature(s) dropped"
    return MatsubaraResult(temps, g, g0, sigma, z_of_t, valid, estimate)


def default_temperatures(t_min: float = 0.01, t_max: float = 0.2, count: int = 20) -> npt.NDArray[np.float64]:
    """Descending fictitious-temperature grid."""
    return np.linspace(t_max, t_min, count)


def qp_weight(method: ZMethod, fit: FitParams, p: AimParameters, omegas: Optional[npt.ArrayLike] = None,
              delta: float = DEFAULT_DELTA,
              temperatures: Optional[Sequence[float]] = None) -> QpEstimate:
    """Dispatch to one Z estimator for a fit at the model's couplings."""
    if method is ZMethod.SPECTRAL:
        return qp_weight_spectral(fit, p.v)
    if method is ZMethod.MATSUBARA:
        temps = default_temperatures() if temperatures is None else temperatures
        return qp_weight_matsubara(fit, temps, p.mu_eff, p.v, p.eps1_minus_mu).estimate
    bundle = spectral_analysis(fit, p, omegas, delta)
    if method is ZMethod.DERIVATIVE:
        return qp_weight_derivative(bundle.sigma)
    return qp_weight_kramers_kronig(bundle.sigma)


SPECTRA_HEADER = ["omega", "a", "re_g", "im_g", "re_sigma", "im_sigma"]
MATSUBARA_HEADER = ["t", "re_g_iw0", "im_g_iw0", "im_sigma_iw0", "z_t"]


def write_spectra_csv(path, bundle: SpectralAnalysis) -> None:
    rows = [
        [w, a, g.real, g.imag, s.real, s.imag]
        for w, a, g, s in zip(bundle.g.omegas, bundle.spectral.values, bundle.g.values, bundle.sigma.values)
    ]
    write_csv(path, SPECTRA_HEADER, rows)


def write_matsubara_csv(path, result: MatsubaraResult,
                        reference: Optional[MatsubaraResult] = None) -> None:
    """
    matsubara.csv; with a reference, adds relative deviations of G and Sigma
    from it at each temperature.
    """
    header = list(MATSUBARA_HEADER)
    if reference is not None:
        if not np.allclose(reference.temperatures, result.temperatures):
            raise AnalysisError("Reference Matsubara data uses a different temperature grid")
        header += ["delta_g", "delta_sigma"]
    rows = []
    for i, T in enumerate(result.temperatures):
        row = [T, result.g[i].real, result.g[i].imag, result.sigma[i].imag, result.z_of_t[i]]
        if reference is not None:
            row += [_relative_deviation(result.g[i], reference.g[i]),
                    _relative_deviation(result.sigma[i], reference.sigma[i])]
        rows.append(row)
    write_csv(path, header, rows)


def _relative_deviation(value: complex, reference: complex) -> float:
    if not (np.isfinite(value) and np.isfinite(reference)) or abs(reference) <= TINY:
        return math.nan
    return float(abs(value - reference) / abs(reference))
