# kinetics/inversion.py
"""
Inverse map from g2 observables back to the four rates

The forward equations reduce to a closed form once k12*k32 = sigma2_inf * D
and the rate sum k_tm are substituted, with D = (k_tm^2 - k_1m^2)/4:

    k32 = 2D / (k_tm + g_e k_1m)
    k12 = sigma2_inf (k_tm + g_e k_1m) / 2
    k23 (k12 - k32) = D - k_tm k32 + k32^2
    k21 = k_tm - k12 - k23 - k32

Each candidate is then polished with a damped Newton iteration on the full
forward map and accepted only if it reproduces the inputs.
"""

import math
from typing import Callable, List, Optional, Union

import numpy as np

from kinetics.models import RateConstants, DerivedParams, DetectionEfficiency
from kinetics.rate_equations import NS_PER_S, eta_value
from utils.errors import NoSolutionError, AmbiguousSolutionError, InvalidParameterError
from utils.logging_config import get_logger

logger = get_logger('inversion')

ROUND_TRIP_TOLERANCE = 1e-9
DEGENERACY_TOLERANCE = 1e-10
MAX_NEWTON_ITERATIONS = 30


def _shape_observables(x: np.ndarray) -> np.ndarray:
    """(g_e, k_tm, k_1m, sigma2_inf) of a raw rate vector"""
    a, b, c, d = x
    splitting = a + b - c - d
    k_1m = math.hypot(splitting, 2.0 * math.sqrt(max(b * c, 0.0)))
    q = a * c + a * d + b * d
    return np.array([
        (2.0 * a * c + d * splitting) / (k_1m * d),
        a + b + c + d,
        k_1m,
        a * d / q,
    ])


def _shape_jacobian(x: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of _shape_observables with respect to (k12, k21, k23, k32)"""
    a, b, c, d = x
    u = a + b - c - d
    k_1m = math.hypot(u, 2.0 * math.sqrt(max(b * c, 0.0)))
    numerator = 2.0 * a * c + d * u
    g_e = numerator / (k_1m * d)
    q = a * c + a * d + b * d
    sigma2 = a * d / q

    d_k1m = np.array([u, u + 2.0 * c, 2.0 * b - u, -u]) / k_1m
    d_numerator = np.array([2.0 * c + d, d, 2.0 * a - d, u - d])
    d_ge = d_numerator / (k_1m * d) - g_e * d_k1m / k_1m
    d_ge[3] -= g_e / d
    d_q = np.array([c + d, d, a, a + b])
    d_sigma2 = -sigma2 * d_q / q
    d_sigma2[0] += d / q
    d_sigma2[3] += a / q

    return np.vstack([d_ge, np.ones(4), d_k1m, d_sigma2])


def _brightness_observables(x: np.ndarray) -> np.ndarray:
    """(g_e, k_tm, k_1m, k21 * sigma2_inf)"""
    values = _shape_observables(x)
    values[3] *= x[1]
    return values


def _brightness_jacobian(x: np.ndarray) -> np.ndarray:
    jacobian = _shape_jacobian(x)
    sigma2 = _shape_observables(x)[3]
    jacobian[3] *= x[1]
    jacobian[3, 1] += sigma2
    return jacobian


def _scales(target: np.ndarray) -> np.ndarray:
    return np.array([
        max(abs(target[0]), 1.0),
        target[1],
        max(target[2], 1e-6 * target[1]),
        target[3],
    ])


def _polish(x0: np.ndarray, target: np.ndarray,
            forward: Callable[[np.ndarray], np.ndarray],
            jacobian: Callable[[np.ndarray], np.ndarray]) -> tuple:
    """
    Damped Newton refinement of a rate vector against target observables

    Returns the refined vector and its maximum scaled residual.
    """
    scale = _scales(target)
    x = x0.copy()
    residual = (forward(x) - target) / scale
    norm = float(np.max(np.abs(residual)))

    for _ in range(MAX_NEWTON_ITERATIONS):
        if norm < 1e-15:
            break
        try:
            step = np.linalg.solve(jacobian(x) / scale[:, None], -residual)
        except np.linalg.LinAlgError:
            break

        damping = 1.0
        improved = False
        while damping > 1e-4:
            trial = x + damping * step
            if trial[1] > 0.0 and trial[3] > 0.0 and np.all(trial >= 0.0):
                trial_residual = (forward(trial) - target) / scale
                trial_norm = float(np.max(np.abs(trial_residual)))
                if np.isfinite(trial_norm) and trial_norm < norm:
                    x, residual, norm = trial, trial_residual, trial_norm
                    improved = True
                    break
            damping *= 0.5
        if not improved:
            break

    return x, norm


def _clip_small(value: float, scale: float) -> float:
    """Round rounding-level negatives to zero"""
    return 0.0 if -DEGENERACY_TOLERANCE * scale < value < 0.0 else value


def _closed_form(k_tm: float, g_e: float, k_1m: float, determinant: float, sigma2_inf: float) -> np.ndarray:
    """Closed-form rate vector; raises when the observables are not realizable"""
    shape_sum = k_tm + g_e * k_1m
    if shape_sum <= 0.0:
        raise NoSolutionError(f"k_tm + g_e*k_1m = {shape_sum:.3g} must be positive")

    k32 = 2.0 * determinant / shape_sum
    k12 = sigma2_inf * shape_sum / 2.0
    gap = k12 - k32
    if abs(gap) <= DEGENERACY_TOLERANCE * k_tm:
        remainder = k_tm - k12 - k32
        candidates = []
        if remainder > 0.0:
            for fraction in (0.0, 0.25, 0.5, 0.75):
                try:
                    candidates.append(RateConstants(k12, remainder * (1.0 - fraction), remainder * fraction, k32))
                except InvalidParameterError:
                    continue
        raise AmbiguousSolutionError(
            "k12 = k32 leaves only k21 + k23 observable", candidates)

    k23 = _clip_small((determinant - k_tm * k32 + k32 * k32) / gap, k_tm)
    k21 = _clip_small(k_tm - k12 - k23 - k32, k_tm)
    if k23 < 0.0 or k21 <= 0.0:
        raise NoSolutionError(f"observables imply non-physical rates (k21={k21:.3g}, k23={k23:.3g})")
    return np.array([k12, k21, k23, k32])


def rates_from_derived(derived: DerivedParams) -> RateConstants:
    """
    Invert (g_e, k_tm, k_1m, sigma2_inf) to the unique rate set that produces them

    Raises:
        NoSolutionError: observables outside the image of the forward map
        AmbiguousSolutionError: k12 = k32, where only k21 + k23 is observable
    """
    target = np.array([derived.g_e, derived.k_tm, derived.k_1m, derived.sigma2_inf])
    x0 = _closed_form(derived.k_tm, derived.g_e, derived.k_1m, derived.determinant, derived.sigma2_inf)

    x, residual = _polish(x0, target, _shape_observables, _shape_jacobian)
    if residual > ROUND_TRIP_TOLERANCE:
        raise NoSolutionError(f"inversion residual {residual:.3g} above tolerance {ROUND_TRIP_TOLERANCE}")

    logger.debug(f"Inverted {derived} -> {x} (residual {residual:.2e})")
    return RateConstants.from_array(x)


def _deduplicate(candidates: List[np.ndarray]) -> List[np.ndarray]:
    unique = []
    for candidate in candidates:
        if not any(np.allclose(candidate, other, rtol=1e-8, atol=0.0) for other in unique):
            unique.append(candidate)
    return unique


def observable_candidates(g_e: float, k_tm: float, k_1m: float, brightness: float,
                          eta: Union[DetectionEfficiency, float]) -> List[RateConstants]:
    """
    Every physical rate set with the given shape observables and count rate

    With k12 = sigma2_inf * K and K = (k_tm + g_e k_1m)/2, the brightness
    condition k21 * sigma2_inf = N/eta becomes the cubic

        -K^2 s^3 + k_tm K s^2 - (D + Y K) s + Y k32 = 0,   Y = N/eta

    in s = sigma2_inf. Physical roots lie in (0, 1) and give k21 > 0, k23 >= 0.
    """
    if not (brightness > 0.0 and math.isfinite(brightness)):
        raise InvalidParameterError(f"brightness must be positive, got {brightness!r}")
    if not (0.0 <= k_1m < k_tm):
        raise NoSolutionError("shape observables need 0 <= k_1m < k_tm")

    eta = eta_value(eta)
    emitted = brightness / NS_PER_S / eta
    determinant = (k_tm - k_1m) * (k_tm + k_1m) / 4.0
    shape_sum = k_tm + g_e * k_1m
    if shape_sum <= 0.0:
        raise NoSolutionError(f"k_tm + g_e*k_1m = {shape_sum:.3g} must be positive")

    k32 = 2.0 * determinant / shape_sum
    half_sum = shape_sum / 2.0
    roots = np.roots([-half_sum ** 2, k_tm * half_sum, -(determinant + emitted * half_sum), emitted * k32])

    target = np.array([g_e, k_tm, k_1m, emitted])
    accepted = []
    for root in roots:
        if abs(root.imag) > 1e-9 * max(abs(root.real), 1e-300):
            continue
        sigma2 = float(root.real)
        if not (0.0 < sigma2 < 1.0):
            continue
        try:
            x0 = _closed_form(k_tm, g_e, k_1m, determinant, sigma2)
        except (NoSolutionError, AmbiguousSolutionError):
            continue
        x, residual = _polish(x0, target, _brightness_observables, _brightness_jacobian)
        if residual <= ROUND_TRIP_TOLERANCE:
            accepted.append(x)

    candidates = [RateConstants.from_array(x) for x in _deduplicate(accepted)]
    logger.debug(f"Observable inversion found {len(candidates)} physical candidates")
    return sorted(candidates, key=lambda r: r.k12)


def rates_from_observables(g_e: float, k_tm: float, k_1m: float, brightness: float,
                           eta: Union[DetectionEfficiency, float],
                           k21_hint: Optional[float] = None) -> RateConstants:
    """
    Invert shape observables plus count rate N (s^-1) to the rates

    N = eta * k21 * sigma2_inf replaces sigma2_inf as the fourth known. The
    count-rate condition generally admits two physical rate sets; k21_hint
    selects the one with k21 closest to it (in ratio).

    Raises:
        NoSolutionError: no physical rate set reproduces the inputs
        AmbiguousSolutionError: several candidates and no hint to choose
    """
    candidates = observable_candidates(g_e, k_tm, k_1m, brightness, eta)
    if not candidates:
        raise NoSolutionError(
            f"no physical rates for g_e={g_e:.4g}, k_tm={k_tm:.4g}, k_1m={k_1m:.4g}, N={brightness:.4g}")
    if len(candidates) == 1:
        return candidates[0]
    if k21_hint is not None:
        return min(candidates, key=lambda r: abs(math.log(r.k21 / k21_hint)))
    raise AmbiguousSolutionError("count rate admits several physical rate sets", candidates)
