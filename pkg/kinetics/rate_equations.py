# kinetics/rate_equations.py
"""
Forward mathematics of the 3-level rate equations
Generator, stationary state, population dynamics, g2(tau) and count rate
"""

import math
from typing import Tuple, Union

import numpy as np
from scipy.linalg import expm

from kinetics.models import RateConstants, Populations, DerivedParams, DetectionEfficiency
from utils.errors import DegenerateSystemError, PreconditionError

NS_PER_S = 1e9

ArrayLike = Union[float, np.ndarray]


def generator_matrix(rates: RateConstants) -> np.ndarray:
    """
    Rate generator G with d(sigma)/dt = G @ sigma

    Columns sum to zero, so probability is conserved.
    """
    k12, k21, k23, k32 = rates.k12, rates.k21, rates.k23, rates.k32
    return np.array([
        [-k12, k21, 0.0],
        [k12, -(k21 + k23), k32],
        [0.0, k23, -k32],
    ])


def stationary_denominator(rates: RateConstants) -> float:
    """k12*k23 + k12*k32 + k21*k32"""
    return rates.k12 * rates.k23 + rates.k12 * rates.k32 + rates.k21 * rates.k32


def stationary(rates: RateConstants) -> Populations:
    """
    Stationary populations (normalized null vector of the generator)

    With k23 = 0 the trap is unreachable from the emitting pair and the
    stationary state is the two-level one, whatever k32 is.
    """
    if rates.k23 == 0.0:
        total = rates.k12 + rates.k21
        return Populations(rates.k21 / total, rates.k12 / total, 0.0)

    denominator = stationary_denominator(rates)
    if denominator <= 0.0:
        raise DegenerateSystemError(
            f"stationary state is not unique for rates {rates} (k12*k23 + k12*k32 + k21*k32 = 0)")

    return Populations(
        rates.k21 * rates.k32 / denominator,
        rates.k12 * rates.k32 / denominator,
        rates.k12 * rates.k23 / denominator,
    )


def derived_from_rates(rates: RateConstants) -> DerivedParams:
    """Map rates to (g_e, k_tm, k_1m, sigma2_inf)"""
    if rates.k32 <= 0.0:
        raise DegenerateSystemError("g_e is undefined for k32 = 0")
    if rates.k12 <= 0.0:
        raise DegenerateSystemError("g2 is undefined without excitation (k12 = 0)")

    k12, k21, k23, k32 = rates.k12, rates.k21, rates.k23, rates.k32
    k_tm = k12 + k21 + k23 + k32
    splitting = k12 + k21 - k23 - k32
    k_1m = math.hypot(splitting, 2.0 * math.sqrt(k21 * k23))
    if k_1m == 0.0:
        raise DegenerateSystemError("relaxation eigenvalues are degenerate (k_1m = 0)")

    g_e = (2.0 * k12 * k23 + k32 * splitting) / (k_1m * k32)
    sigma2_inf = k12 * k32 / stationary_denominator(rates)
    return DerivedParams(g_e=g_e, k_tm=k_tm, k_1m=k_1m, sigma2_inf=sigma2_inf)


def relaxation_rates(k_tm: float, k_1m: float, determinant: float = None) -> Tuple[float, float]:
    """
    Fast and slow relaxation rates (k_tm + k_1m)/2 and (k_tm - k_1m)/2

    The slow rate is taken as determinant/fast when the determinant is known,
    which avoids cancellation when the two timescales are far apart.
    """
    fast = 0.5 * (k_tm + k_1m)
    if determinant is None:
        determinant = 0.25 * (k_tm - k_1m) * (k_tm + k_1m)
    slow = determinant / fast
    return fast, slow


def _rates_relaxation(rates: RateConstants, derived: DerivedParams) -> Tuple[float, float]:
    return relaxation_rates(derived.k_tm, derived.k_1m, stationary_denominator(rates))


def g2_model(tau: ArrayLike, g_e: float, fast: float, slow: float) -> ArrayLike:
    """
    g2(tau) = 1 - (1+g_e)/2 exp(-fast tau) - (1-g_e)/2 exp(-slow tau)

    Written with expm1 so that g2(0) is exactly 0.
    """
    tau = np.asarray(tau, dtype=float)
    value = -0.5 * (1.0 + g_e) * np.expm1(-fast * tau) - 0.5 * (1.0 - g_e) * np.expm1(-slow * tau)
    return value if value.ndim else float(value)


def g2_analytic(rates: RateConstants, tau: ArrayLike) -> ArrayLike:
    """Closed-form g2(tau) = sigma2(tau)/sigma2_inf for tau >= 0"""
    tau_array = np.asarray(tau, dtype=float)
    if np.any(tau_array < 0.0):
        raise PreconditionError("g2_analytic requires tau >= 0")

    derived = derived_from_rates(rates)
    fast, slow = _rates_relaxation(rates, derived)
    return g2_model(tau, derived.g_e, fast, slow)


def _segment_integral(lo: np.ndarray, hi: np.ndarray, g_e: float, fast: float, slow: float) -> np.ndarray:
    """Integral of g2 over [lo, hi] with 0 <= lo <= hi"""
    length = hi - lo

    def exp_integral(rate):
        return np.exp(-rate * lo) * (-np.expm1(-rate * length)) / rate

    return length - 0.5 * (1.0 + g_e) * exp_integral(fast) - 0.5 * (1.0 - g_e) * exp_integral(slow)


def g2_bin_averaged(rates: RateConstants, edges: np.ndarray) -> np.ndarray:
    """
    Average of g2(|tau|) over each bin [edges[i], edges[i+1]]

    Bins may lie on either side of zero or straddle it.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise PreconditionError("bin edges must be a strictly increasing 1-d array")

    derived = derived_from_rates(rates)
    fast, slow = _rates_relaxation(rates, derived)
    left, right = edges[:-1], edges[1:]

    positive = _segment_integral(np.maximum(left, 0.0), np.maximum(right, 0.0), derived.g_e, fast, slow)
    negative = _segment_integral(np.maximum(-right, 0.0), np.maximum(-left, 0.0), derived.g_e, fast, slow)
    return (positive + negative) / (right - left)


def population_trajectory(rates: RateConstants, taus: np.ndarray, initial: Populations) -> np.ndarray:
    """
    Populations at every tau of a grid, shape (len(taus), 3)

    Each row is expm(G tau) @ initial, renormalized onto the probability simplex.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus < 0.0):
        raise PreconditionError("population dynamics require tau >= 0")

    generator = generator_matrix(rates)
    start = initial.as_array()
    propagators = expm(taus[:, None, None] * generator[None, :, :])
    values = propagators @ start

    values = np.clip(values, 0.0, 1.0)
    values /= values.sum(axis=1, keepdims=True)
    values[taus == 0.0] = start
    return values


def populations_at(rates: RateConstants, tau: float, initial: Populations) -> Populations:
    """Populations at delay tau starting from initial"""
    if tau == 0.0:
        return initial
    return Populations.from_array(population_trajectory(rates, np.array([tau]), initial)[0])


def eta_value(eta: Union[DetectionEfficiency, float]) -> float:
    return eta.eta if isinstance(eta, DetectionEfficiency) else DetectionEfficiency(eta).eta


def emission_rate(rates: RateConstants) -> float:
    """Photons emitted per ns in the stationary state (k21 * sigma2_inf)"""
    return rates.k21 * stationary(rates).sigma2


def count_rate(rates: RateConstants, eta: Union[DetectionEfficiency, float]) -> float:
    """Detected count rate N = eta * k21 * sigma2_inf in counts per second"""
    return eta_value(eta) * emission_rate(rates) * NS_PER_S
