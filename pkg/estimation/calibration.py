# estimation/calibration.py
"""
Detection-efficiency calibration and per-power rate inversion

k21 is a property of the emitter, so the right eta is the one for which
the rates inverted at every pump power share the same k21.
"""

import itertools
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from estimation.models import EtaCalibration, PowerPoint
from kinetics.inversion import observable_candidates, rates_from_observables
from kinetics.models import DetectionEfficiency, RateConstants
from utils.errors import (
    CalibrationFailedError, NoSolutionError, AmbiguousSolutionError, PreconditionError, G2KineticsError,
)
from utils.logging_config import get_logger

logger = get_logger('calibration')

ETA_RANGE = (1e-6, 1.0)
GRID_POINTS = 200
REFINED_MINIMA = 3
MIN_POINTS = 3

# Above this many branch combinations the assignment is chosen greedily
MAX_BRANCH_COMBINATIONS = 4096

RATE_NAMES = ('k12', 'k21', 'k23', 'k32')


def _relative_std(values: np.ndarray) -> float:
    mean = float(np.mean(values))
    return float(np.std(values, ddof=1) / mean) if mean > 0.0 else math.inf


def _candidate_sets(points: Sequence[PowerPoint], eta: float) -> Optional[List[List[RateConstants]]]:
    sets = []
    for point in points:
        try:
            candidates = observable_candidates(point.fit.g_e, point.fit.k_tm, point.fit.k_1m,
                                               point.brightness, eta)
        except G2KineticsError:
            return None
        if not candidates:
            return None
        sets.append(candidates)
    return sets


def _best_assignment(candidate_sets: List[List[RateConstants]]) -> Tuple[float, List[RateConstants]]:
    """Branch choice per power that makes k21 most uniform"""
    combinations = int(np.prod([len(c) for c in candidate_sets]))
    if combinations <= MAX_BRANCH_COMBINATIONS:
        best = (math.inf, None)
        for choice in itertools.product(*candidate_sets):
            spread = _relative_std(np.array([r.k21 for r in choice]))
            if spread < best[0]:
                best = (spread, list(choice))
        return best

    # Greedy: anchor on the median k21 of all candidates
    anchor = float(np.median([r.k21 for c in candidate_sets for r in c]))
    choice = [min(c, key=lambda r: abs(math.log(r.k21 / anchor))) for c in candidate_sets]
    return _relative_std(np.array([r.k21 for r in choice])), choice


def k21_dispersion(points: Sequence[PowerPoint], eta: float) -> float:
    """Relative standard deviation of k21 across powers; inf if any point is not invertible"""
    candidate_sets = _candidate_sets(points, eta)
    if candidate_sets is None:
        return math.inf
    return _best_assignment(candidate_sets)[0]


def calibrate_eta(points: Sequence[PowerPoint], eta_range: Tuple[float, float] = ETA_RANGE,
                  grid_points: int = GRID_POINTS) -> EtaCalibration:
    """
    Find the eta minimizing the spread of k21 across the power ladder

    A log-spaced grid over eta_range locates candidate minima, which are then
    refined by golden-section search in log(eta).

    Raises:
        PreconditionError: fewer than 3 points with converged fits
        CalibrationFailedError: no eta makes every point invertible
    """
    usable = [p for p in points if p.fit.converged]
    if len(usable) < MIN_POINTS:
        raise PreconditionError(f"eta calibration needs at least {MIN_POINTS} converged power points, "
                                f"got {len(usable)}")
    usable = sorted(usable, key=lambda p: p.power_mW)

    log_grid = np.linspace(math.log(eta_range[0]), math.log(eta_range[1]), grid_points)
    objective = np.array([k21_dispersion(usable, math.exp(x)) for x in log_grid])
    finite = np.isfinite(objective)
    if not np.any(finite):
        raise CalibrationFailedError(
            f"no eta in [{eta_range[0]:g}, {eta_range[1]:g}] makes every power point invertible")

    def log_objective(x: float) -> float:
        if not (log_grid[0] <= x <= log_grid[-1]):
            return math.inf
        return k21_dispersion(usable, math.exp(x))

    # Interior grid minima, best first
    minima = [i for i in range(1, grid_points - 1)
              if finite[i] and objective[i] <= objective[i - 1] and objective[i] <= objective[i + 1]]
    minima.sort(key=lambda i: objective[i])
    best_index = int(np.argmin(np.where(finite, objective, np.inf)))
    best_x, best_value = float(log_grid[best_index]), float(objective[best_index])

    for i in minima[:REFINED_MINIMA]:
        try:
            refined = minimize_scalar(log_objective, bracket=(log_grid[i - 1], log_grid[i], log_grid[i + 1]),
                                      method='golden')
        except ValueError:
            continue
        if np.isfinite(refined.fun) and refined.fun < best_value:
            best_x, best_value = float(refined.x), float(refined.fun)

    eta = math.exp(best_x)
    candidate_sets = _candidate_sets(usable, eta)
    if candidate_sets is None:
        raise CalibrationFailedError(f"refined eta {eta:.4g} leaves a power point non-invertible")
    dispersion, rates = _best_assignment(candidate_sets)

    logger.info(f"Calibrated eta = {eta:.4g} (k21 spread {dispersion:.2%} over {len(usable)} powers)")
    return EtaCalibration(
        eta=DetectionEfficiency(eta),
        powers_mW=np.array([p.power_mW for p in usable]),
        k21_values=np.array([r.k21 for r in rates]),
        dispersion=dispersion,
        rates=rates,
        grid_eta=np.exp(log_grid),
        grid_objective=objective,
    )


def invert_point(point: PowerPoint, eta: DetectionEfficiency, k21_hint: Optional[float] = None) -> RateConstants:
    """Rates of one power point at a known eta"""
    fit = point.fit
    return rates_from_observables(fit.g_e, fit.k_tm, fit.k_1m, point.brightness, eta, k21_hint=k21_hint)


def rate_uncertainties(point: PowerPoint, eta: DetectionEfficiency, rates: RateConstants,
                       relative_step: float = 1e-6) -> Dict[str, float]:
    """
    Standard errors of the inverted rates

    The fit covariance of (g_e, k_tm, k_1m) and the Poisson error of the
    brightness are pushed through a central-difference Jacobian of the
    inversion, following the branch of the given rates.
    """
    fit = point.fit
    inputs = np.array([fit.g_e, fit.k_tm, fit.k_1m, point.brightness])
    covariance = np.zeros((4, 4))
    covariance[:3, :3] = fit.covariance
    covariance[3, 3] = point.brightness_std ** 2

    jacobian = np.zeros((4, 4))
    for j in range(4):
        step = relative_step * max(abs(inputs[j]), 1e-12)
        columns = []
        for sign in (1.0, -1.0):
            shifted = inputs.copy()
            shifted[j] += sign * step
            try:
                columns.append(rates_from_observables(*shifted[:3], shifted[3], eta,
                                                      k21_hint=rates.k21).as_array())
            except (NoSolutionError, AmbiguousSolutionError):
                columns.append(None)
        if columns[0] is not None and columns[1] is not None:
            jacobian[:, j] = (columns[0] - columns[1]) / (2.0 * step)
        elif columns[0] is not None:
            jacobian[:, j] = (columns[0] - rates.as_array()) / step
        elif columns[1] is not None:
            jacobian[:, j] = (rates.as_array() - columns[1]) / step

    rate_covariance = jacobian @ covariance @ jacobian.T
    errors = np.sqrt(np.clip(np.diag(rate_covariance), 0.0, None))
    return dict(zip(RATE_NAMES, errors.tolist()))


def fill_rates(points: Sequence[PowerPoint], calibration: EtaCalibration) -> List[PowerPoint]:
    """Attach the calibrated rates and their errors to each point"""
    by_power = dict(zip(calibration.powers_mW.tolist(), calibration.rates))
    for point in points:
        rates = by_power.get(point.power_mW)
        if rates is None:
            rates = invert_point(point, calibration.eta, k21_hint=calibration.k21_mean)
        point.rates = rates
        point.rate_std = rate_uncertainties(point, calibration.eta, rates)
    return list(points)
