# estimation/saturation.py
"""
Least-squares fit of the saturation curve N(P) through the rate model
"""

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import least_squares

from estimation.models import SaturationFit
from kinetics.models import PowerModel, DetectionEfficiency
from kinetics.power import saturation_curve, two_level_reference_curve
from kinetics.rate_equations import eta_value
from utils.config import Config
from utils.errors import PreconditionError, G2KineticsError
from utils.logging_config import get_logger

logger = get_logger('saturation')

MIN_SATURATION_POINTS = 4
DEFAULT_FREE_COEFFICIENTS = ('k12_slope', 'k23_slope', 'k32_slope')


def fit_saturation(data: Sequence[Tuple[float, float]], model_seed: PowerModel,
                   eta: Union[DetectionEfficiency, float],
                   free_coefficients: Sequence[str] = DEFAULT_FREE_COEFFICIENTS,
                   sigma: Optional[Sequence[float]] = None,
                   max_iterations: Optional[int] = None) -> SaturationFit:
    """
    Fit N(P) = eta * k21 * sigma2_inf(rates_at_power(model, P))

    Args:
        data: (power in mW, count rate in counts/s) pairs
        model_seed: starting PowerModel; coefficients not listed as free stay fixed
        eta: detection efficiency
        free_coefficients: PowerModel coefficients to adjust
        sigma: count-rate errors; Poisson-like sqrt(N) when omitted

    Raises:
        PreconditionError: fewer than 4 points or unknown coefficient names
    """
    if len(data) < MIN_SATURATION_POINTS:
        raise PreconditionError(f"saturation fit needs at least {MIN_SATURATION_POINTS} points, got {len(data)}")
    unknown = [name for name in free_coefficients if name not in PowerModel.COEFFICIENTS]
    if unknown or not free_coefficients:
        raise PreconditionError(f"free coefficients must be a non-empty subset of {PowerModel.COEFFICIENTS}")

    powers = np.array([p for p, _ in data], dtype=float)
    counts = np.array([n for _, n in data], dtype=float)
    errors = np.sqrt(np.maximum(counts, 1.0)) if sigma is None else np.asarray(sigma, dtype=float)
    eta = eta_value(eta)

    # The seed's validity range is widened to cover the data
    seed = model_seed.with_coefficients(p_min=min(model_seed.p_min, float(powers.min())),
                                        p_max=max(model_seed.p_max, float(powers.max())))
    free = tuple(free_coefficients)
    x0 = np.array([getattr(seed, name) for name in free])
    # Intercepts often start at or near zero
    scale = np.maximum(np.abs(x0), 1e-4)
    penalty = 1e3 * np.max(counts / errors)

    def build(x: np.ndarray) -> Optional[PowerModel]:
        try:
            return seed.with_coefficients(**dict(zip(free, (x * scale).tolist())))
        except G2KineticsError:
            return None

    def residuals(x: np.ndarray) -> np.ndarray:
        model = build(x)
        if model is None:
            return np.full(counts.size, penalty)
        try:
            predicted = saturation_curve(model, powers, eta)
        except G2KineticsError:
            return np.full(counts.size, penalty)
        return (predicted - counts) / errors

    result = least_squares(residuals, x0 / scale, method='trf', xtol=1e-10, ftol=1e-12,
                           max_nfev=max_iterations or Config.FIT_MAX_ITERATIONS * len(free))

    model = build(result.x)
    if model is None:
        model = seed
    predicted = saturation_curve(model, powers, eta)
    residual = (predicted - counts) / errors
    dof = max(counts.size - len(free), 1)

    jac = result.jac / scale[None, :]
    try:
        covariance = np.linalg.pinv(jac.T @ jac)
    except np.linalg.LinAlgError:
        covariance = np.full((len(free), len(free)), math.nan)

    converged = bool(result.status > 0)
    if not converged:
        logger.warning(f"Saturation fit stopped after {result.nfev} evaluations: {result.message}")
    logger.info(f"Saturation fit over {counts.size} powers: chi2/dof = {np.sum(residual ** 2) / dof:.3f}")

    return SaturationFit(
        model=model,
        powers_mW=powers,
        predicted=predicted,
        reference=two_level_reference_curve(model, powers, eta),
        residual_norm=float(np.linalg.norm(residual)),
        reduced_chi2=float(np.sum(residual ** 2) / dof),
        free_coefficients=free,
        covariance=covariance,
        converged=converged,
        iterations=int(result.nfev),
        eta=eta,
        message=str(result.message),
    )
