# estimation/background.py
"""
Background correction of g2 curves and brightness estimation
"""

import numpy as np

from photon_sim.models import CoincidenceHistogram, G2Curve
from utils.errors import InvalidParameterError, PreconditionError
from utils.logging_config import get_logger

logger = get_logger('background')


def background_correct(curve: G2Curve, rho: float) -> G2Curve:
    """
    Remove the coincidences of uncorrelated background

    g2_corr = (g2_raw - (1 - rho^2)) / rho^2, standard errors divided by rho^2,
    where rho = S/(S+B) is the signal fraction.
    """
    if not (0.0 < rho <= 1.0):
        raise InvalidParameterError(f"rho must be in (0, 1], got {rho!r}")
    if curve.is_background_corrected:
        raise PreconditionError(f"curve was already corrected with rho = {curve.rho}")

    rho2 = rho * rho
    g2 = (curve.g2 - (1.0 - rho2)) / rho2
    sigma = curve.sigma / rho2
    logger.debug(f"Background correction with rho = {rho:.4f} on {len(curve)} bins")
    return curve.with_values(g2, sigma, rho=rho, flags=list(curve.flags) + ['background_corrected'])


def estimate_brightness(hist: CoincidenceHistogram, rho: float = 1.0) -> float:
    """Emitter count rate N = rho * (singles_A + singles_B) / duration in counts/s"""
    if hist.duration_s <= 0.0:
        raise PreconditionError("histogram duration must be > 0")
    if not (0.0 < rho <= 1.0):
        raise InvalidParameterError(f"rho must be in (0, 1], got {rho!r}")
    return rho * (hist.singles_a + hist.singles_b) / hist.duration_s


def brightness_std(hist: CoincidenceHistogram, rho: float = 1.0) -> float:
    """Poisson standard error of estimate_brightness"""
    return rho * np.sqrt(hist.singles_a + hist.singles_b) / hist.duration_s
