# kinetics/power.py
"""
Pump-power dependence of the rates and the saturation curve
"""

from typing import Union

import numpy as np

from kinetics.models import PowerModel, RateConstants, DetectionEfficiency
from kinetics.rate_equations import count_rate, NS_PER_S, eta_value
from utils.errors import PowerOutOfRangeError

NEGATIVE_RATE_TOLERANCE = 1e-15


def rates_at_power(model: PowerModel, power: float) -> RateConstants:
    """Rates of a linear PowerModel at pump power P (mW)"""
    power = float(power)
    if not (model.p_min <= power <= model.p_max):
        raise PowerOutOfRangeError(
            f"power {power} mW outside the model validity range [{model.p_min}, {model.p_max}] mW")

    values = {}
    for rate in ('k12', 'k23', 'k32'):
        value = model.linear(rate, power)
        if value < -NEGATIVE_RATE_TOLERANCE:
            raise PowerOutOfRangeError(f"{rate} = {value:.3g} ns^-1 is negative at {power} mW")
        values[rate] = max(value, 0.0)

    try:
        return RateConstants(k12=values['k12'], k21=model.k21, k23=values['k23'], k32=values['k32'])
    except ValueError as e:
        raise PowerOutOfRangeError(f"invalid rates at {power} mW: {e}") from e


def saturation_curve(model: PowerModel, powers, eta: Union[DetectionEfficiency, float]) -> np.ndarray:
    """Predicted detected count rate N(P) in counts per second"""
    return np.array([count_rate(rates_at_power(model, p), eta) for p in np.atleast_1d(powers)])


def two_level_count_rate(k12, k21: float, eta: Union[DetectionEfficiency, float]):
    """Normal saturation N = eta * k21 * k12/(k12 + k21) in counts per second"""
    k12 = np.asarray(k12, dtype=float)
    value = eta_value(eta) * k21 * k12 / (k12 + k21) * NS_PER_S
    return value if value.ndim else float(value)


def two_level_reference_curve(model: PowerModel, powers, eta: Union[DetectionEfficiency, float]) -> np.ndarray:
    """Saturation curve of the same k12(P) and k21 with the trap switched off"""
    powers = np.atleast_1d(np.asarray(powers, dtype=float))
    k12 = np.maximum(model.k12_slope * powers + model.k12_intercept, 0.0)
    return np.atleast_1d(two_level_count_rate(k12, model.k21, eta))
