# estimation/power_fit.py
"""
Linear pump-power dependence of the inverted rates
"""

from typing import Dict, Sequence, Tuple

import numpy as np
import statsmodels.api as sm

from estimation.models import PowerModelFit, PowerPoint
from kinetics.models import PowerModel
from utils.errors import PreconditionError, InvalidParameterError
from utils.logging_config import get_logger

logger = get_logger('power_fit')

MIN_POWERS = 3
LINEAR_RATES = ('k12', 'k23', 'k32')


def _weights(points: Sequence[PowerPoint], rate: str) -> Tuple[np.ndarray, bool]:
    """Inverse-variance weights when every point carries a positive error, else uniform"""
    errors = np.array([(p.rate_std or {}).get(rate, 0.0) for p in points])
    if np.all(errors > 0.0) and np.all(np.isfinite(errors)):
        return 1.0 / errors ** 2, True
    return np.ones(len(points)), False


def _regress(powers: np.ndarray, values: np.ndarray, weights: np.ndarray, absolute: bool):
    """Weighted line fit; absolute weights keep their scale in the covariance"""
    design = sm.add_constant(powers, has_constant='add')
    model = sm.WLS(values, design, weights=weights)
    result = model.fit(cov_type='fixed scale') if absolute else model.fit()
    intercept, slope = result.params
    intercept_se, slope_se = result.bse
    return float(slope), float(intercept), float(slope_se), float(intercept_se), np.asarray(result.resid)


def extract_power_model(points: Sequence[PowerPoint], weighted: bool = True) -> PowerModelFit:
    """
    Regress k12, k23 and k32 linearly on pump power and average k21

    Raises:
        PreconditionError: fewer than 3 points, missing rates, or all powers equal
    """
    if len(points) < MIN_POWERS:
        raise PreconditionError(f"power model needs at least {MIN_POWERS} powers, got {len(points)}")
    if any(p.rates is None for p in points):
        raise PreconditionError("every power point needs inverted rates before regression")

    points = sorted(points, key=lambda p: p.power_mW)
    powers = np.array([p.power_mW for p in points])
    if np.ptp(powers) == 0.0:
        raise PreconditionError("regression is rank deficient: all powers are equal")

    coefficients: Dict[str, float] = {}
    std_errors: Dict[str, float] = {}
    residuals: Dict[str, np.ndarray] = {}
    all_weighted = weighted

    for rate in LINEAR_RATES:
        values = np.array([getattr(p.rates, rate) for p in points])
        weights, absolute = _weights(points, rate) if weighted else (np.ones(len(points)), False)
        all_weighted = all_weighted and absolute
        slope, intercept, slope_se, intercept_se, resid = _regress(powers, values, weights, absolute)
        coefficients[f"{rate}_slope"] = slope
        coefficients[f"{rate}_intercept"] = intercept
        std_errors[f"{rate}_slope"] = slope_se
        std_errors[f"{rate}_intercept"] = intercept_se
        residuals[rate] = resid

    k21_values = np.array([p.rates.k21 for p in points])
    k21_weights, absolute = _weights(points, 'k21') if weighted else (np.ones(len(points)), False)
    k21_mean = float(np.average(k21_values, weights=k21_weights))
    if absolute:
        k21_se = float(1.0 / np.sqrt(np.sum(k21_weights)))
    else:
        k21_se = float(np.std(k21_values, ddof=1) / np.sqrt(len(points)))
    coefficients['k21'] = k21_mean
    std_errors['k21'] = k21_se
    residuals['k21'] = k21_values - k21_mean

    try:
        model = PowerModel(p_min=float(powers[0]), p_max=float(powers[-1]), **coefficients)
    except InvalidParameterError as e:
        raise PreconditionError(f"fitted power model is not physical over the measured range: {e}") from e

    logger.info(f"Power model: k12 slope {model.k12_slope:.4g}, k23 slope {model.k23_slope:.4g}, "
                f"k32 slope {model.k32_slope:.4g} /ns/mW, k21 {model.k21:.4g} /ns")
    return PowerModelFit(model=model, std_errors=std_errors, residuals=residuals,
                         powers_mW=powers, weighted=all_weighted)
